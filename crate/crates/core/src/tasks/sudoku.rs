//! Sudoku boards of order 2 (4×4) and 3 (9×9).
//!
//! Encoding per cell: `x` holds the one-hot digit times the given flag, then
//! the flag itself (`side + 1` values); `y` holds the one-hot digit.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{argmax, Difficulty, Meta, ProblemInstance, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

/// Digits `0..side` per cell, row-major.
pub type Board = Vec<usize>;

fn cell_ok(order: usize, board: &[Option<usize>], cell: usize, d: usize) -> bool {
    let side = order * order;
    let (r, c) = (cell / side, cell % side);
    let (br, bc) = (r / order * order, c / order * order);
    for i in 0..side {
        if board[r * side + i] == Some(d) || board[i * side + c] == Some(d) {
            return false;
        }
        let (rr, cc) = (br + i / order, bc + i % order);
        if board[rr * side + cc] == Some(d) {
            return false;
        }
    }
    true
}

fn fill(order: usize, board: &mut [Option<usize>], rng: &mut impl Rng) -> bool {
    let side = order * order;
    let Some(cell) = board.iter().position(Option::is_none) else {
        return true;
    };
    let mut digits: Vec<usize> = (0..side).collect();
    digits.shuffle(rng);
    for d in digits {
        if cell_ok(order, board, cell, d) {
            board[cell] = Some(d);
            if fill(order, board, rng) {
                return true;
            }
            board[cell] = None;
        }
    }
    false
}

/// Uniformly shuffled complete board from randomized backtracking.
pub fn random_board(order: usize, rng: &mut impl Rng) -> Board {
    let side = order * order;
    let mut b = vec![None; side * side];
    assert!(fill(order, &mut b, rng), "an empty board always has a completion");
    b.into_iter().map(|d| d.expect("filled")).collect()
}

/// Rows, columns and blocks are each permutations of the digits.
pub fn board_valid(order: usize, board: &[usize]) -> bool {
    let side = order * order;
    if board.len() != side * side || board.iter().any(|&d| d >= side) {
        return false;
    }
    let distinct = |cells: Vec<usize>| {
        let mut seen = vec![false; side];
        cells.into_iter().all(|c| !std::mem::replace(&mut seen[board[c]], true))
    };
    (0..side).all(|i| {
        let (br, bc) = (i / order * order, i % order * order);
        distinct((0..side).map(|j| i * side + j).collect())
            && distinct((0..side).map(|j| j * side + i).collect())
            && distinct((0..side).map(|j| (br + j / order) * side + bc + j % order).collect())
    })
}

/// Encode a solution and its given mask.
pub fn encode(order: usize, solution: &[usize], givens: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let side = order * order;
    let mut x = Vec::with_capacity(solution.len() * (side + 1));
    let mut y = Vec::with_capacity(solution.len() * side);
    for (cell, &d) in solution.iter().enumerate() {
        let g = givens[cell] as f64;
        for v in 0..side {
            let hot = if v == d { 1.0 } else { 0.0 };
            x.push(hot * g);
            y.push(hot);
        }
        x.push(g);
    }
    (x, y)
}

/// Digits of a (possibly relaxed) one-hot board via per-cell argmax.
pub fn decode(order: usize, y: &[f64]) -> Board {
    y.chunks(order * order).map(argmax).collect()
}

/// `y` is a valid board that agrees with every given in `x`.
pub fn solution_consistent(order: usize, x: &Tensor, y: &Tensor) -> bool {
    let side = order * order;
    let cells = side * side;
    if x.numel() != cells * (side + 1) || y.numel() != cells * side {
        return false;
    }
    let onehot = y
        .data()
        .chunks(side)
        .all(|c| c.iter().filter(|&&v| v == 1.0).count() == 1 && c.iter().all(|&v| v == 0.0 || v == 1.0));
    if !onehot {
        return false;
    }
    let board = decode(order, y.data());
    if !board_valid(order, &board) {
        return false;
    }
    x.data().chunks(side + 1).zip(&board).all(|(cell, &d)| {
        let given = cell[side] == 1.0;
        !given || argmax(&cell[..side]) == d
    })
}

pub fn gen_sudoku(order: usize, givens: (usize, usize), count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    if !(2..=3).contains(&order) {
        return Err(Error::Task(format!("sudoku order must be 2 or 3, got {order}")));
    }
    let cells = order.pow(4);
    let (lo, hi) = givens;
    if lo > hi || hi > cells {
        return Err(Error::Task(format!("givens range [{lo}, {hi}] infeasible for {cells} cells")));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = stream(seed, &[tag::DATA, i as u64]);
            let solution = random_board(order, &mut rng);
            let target = rng.gen_range(lo..=hi);
            let mut order_cells: Vec<usize> = (0..cells).collect();
            order_cells.shuffle(&mut rng);
            // removing a given never removes the generating solution
            let mut mask = vec![1u8; cells];
            for &c in &order_cells[..cells - target] {
                mask[c] = 0;
            }
            instance(order, &solution, mask)
        })
        .collect())
}

pub fn instance(order: usize, solution: &[usize], givens: Vec<u8>) -> ProblemInstance {
    let (x, y) = encode(order, solution, &givens);
    ProblemInstance {
        kind: TaskKind::Sudoku { order },
        difficulty: Difficulty::Standard,
        x: Tensor::vector(x),
        y_star: Tensor::vector(y),
        meta: Meta::Sudoku { givens },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNOWN: [usize; 16] = [0, 1, 2, 3, 2, 3, 0, 1, 1, 0, 3, 2, 3, 2, 1, 0];

    #[test]
    fn known_board_is_valid_and_swap_breaks_it() {
        assert!(board_valid(2, &KNOWN));
        let mut b = KNOWN.to_vec();
        b.swap(0, 1);
        assert!(!board_valid(2, &b));
    }

    #[test]
    fn full_givens_encode_the_solution() {
        let inst = instance(2, &KNOWN, vec![1; 16]);
        let digits: Vec<usize> = inst.x.data().chunks(5).map(|c| argmax(&c[..4])).collect();
        assert_eq!(digits, KNOWN.to_vec());
        assert!(inst.is_valid());
    }

    #[test]
    fn givens_counts_in_range() {
        for inst in gen_sudoku(2, (5, 8), 50, 2).unwrap() {
            let Meta::Sudoku { givens } = &inst.meta else { panic!() };
            let n = givens.iter().filter(|&&g| g == 1).count();
            assert!((5..=8).contains(&n));
            assert!(inst.is_valid());
        }
        assert!(gen_sudoku(2, (10, 20), 1, 0).is_err());
        assert!(gen_sudoku(4, (10, 20), 1, 0).is_err());
    }

    #[test]
    fn order_three_boards() {
        for inst in gen_sudoku(3, (31, 42), 3, 1).unwrap() {
            assert!(inst.is_valid());
        }
    }
}
