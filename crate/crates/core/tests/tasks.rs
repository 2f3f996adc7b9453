use std::collections::VecDeque;

use ired_core::tasks::graph::{connectivity_valid, random_digraph, reachability};
use ired_core::tasks::io::{read_jsonl, write_jsonl};
use ired_core::tasks::{generate, metric, Difficulty, SplitParams, TaskKind};
use ired_core::rng::stream;
use ired_core::Tensor;

/// Reachability by breadth-first search from every node, written
/// independently of the library's own search.
fn bfs_closure(adj: &[u8], n: usize) -> Vec<u8> {
    let mut out = vec![0u8; n * n];
    for s in 0..n {
        let mut queue = VecDeque::from([s]);
        out[s * n + s] = 1;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if adj[u * n + v] == 1 && out[s * n + v] == 0 {
                    out[s * n + v] = 1;
                    queue.push_back(v);
                }
            }
        }
    }
    out
}

#[test]
fn closure_equals_bfs_on_a_thousand_graphs() {
    for seed in 0..1000u64 {
        let mut rng = stream(seed, &[77]);
        let n = 2 + (seed % 11) as usize;
        let (adj, _) = random_digraph(n, (n / 2).max(1), &mut rng);
        assert_eq!(reachability(&adj, n), bfs_closure(&adj, n), "seed {seed}");
    }
}

#[test]
fn generated_connectivity_survives_reload_and_the_oracle() {
    let kind = TaskKind::Connectivity { nodes: 8 };
    let data = generate(&SplitParams::desk(kind, Difficulty::Standard), Difficulty::Standard, 100, 3).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &data).unwrap();
    let back = read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, data);
    for inst in &back {
        assert!(connectivity_valid(8, &inst.x, &inst.y_star));
        let adj: Vec<u8> = inst.x.data().iter().map(|&v| v as u8).collect();
        let y: Vec<u8> = inst.y_star.data().iter().map(|&v| v as u8).collect();
        assert_eq!(y, bfs_closure(&adj, 8));
    }
}

#[test]
fn addition_labels_are_centred() {
    // entries are sums of two U(−1, 1) draws: variance 2/3
    let kind = TaskKind::Addition { n: 8 };
    let data = generate(&SplitParams::desk(kind, Difficulty::Standard), Difficulty::Standard, 500, 11).unwrap();
    let values: Vec<f64> = data.iter().flat_map(|i| i.y_star.data().to_vec()).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    assert!(mean.abs() < 3.0 * (2.0 / 3.0 / n).sqrt(), "mean {mean}");
}

#[test]
fn sudoku_row_violation_scores_zero() {
    let kind = TaskKind::Sudoku { order: 2 };
    let inst = &generate(&SplitParams::desk(kind, Difficulty::Standard), Difficulty::Standard, 1, 5).unwrap()[0];
    assert_eq!(metric(&inst.y_star, inst).unwrap(), 1.0);
    // give cell (0, 0) the digit of cell (0, 1)
    let mut y = inst.y_star.data().to_vec();
    let second: Vec<f64> = y[4..8].to_vec();
    y[..4].copy_from_slice(&second);
    assert_eq!(metric(&Tensor::vector(y), inst).unwrap(), 0.0);
}
