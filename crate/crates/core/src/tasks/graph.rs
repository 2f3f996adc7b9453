//! Random geometric digraphs: reachability and shortest-path planning.
//!
//! Nodes are points uniform in the unit square. Each node draws an out-degree
//! uniformly from `[1, max_degree]` and links to that many nearest other nodes.

use std::collections::VecDeque;

use rand::Rng;

use super::{argmax, Difficulty, Meta, ProblemInstance, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

/// Row-major 0/1 adjacency, `adj[i·n + j] = 1` for an edge `i → j`.
pub type Adjacency = Vec<u8>;

pub fn random_digraph(n: usize, max_degree: usize, rng: &mut impl Rng) -> (Adjacency, Vec<[f64; 2]>) {
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let mut adj = vec![0u8; n * n];
    let max_degree = max_degree.clamp(1, n - 1);
    for i in 0..n {
        let k = rng.gen_range(1..=max_degree);
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let (dx, dy) = (pts[j][0] - pts[i][0], pts[j][1] - pts[i][1]);
                (dx * dx + dy * dy, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &others[..k] {
            adj[i * n + j] = 1;
        }
    }
    (adj, pts)
}

/// Boolean transitive closure by Floyd–Warshall; every node reaches itself.
pub fn reachability(adj: &[u8], n: usize) -> Vec<u8> {
    let mut r = adj.to_vec();
    for i in 0..n {
        r[i * n + i] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i * n + k] == 1 {
                for j in 0..n {
                    if r[k * n + j] == 1 {
                        r[i * n + j] = 1;
                    }
                }
            }
        }
    }
    r
}

/// Hop distances from `s` by breadth-first search.
pub fn bfs(adj: &[u8], n: usize, s: usize) -> Vec<Option<u32>> {
    let mut d = vec![None; n];
    d[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        let du = d[u].expect("queued nodes have distances");
        for v in 0..n {
            if adj[u * n + v] == 1 && d[v].is_none() {
                d[v] = Some(du + 1);
                q.push_back(v);
            }
        }
    }
    d
}

/// All-pairs hop distances by Floyd–Warshall with unit edges.
pub fn all_pairs(adj: &[u8], n: usize) -> Vec<Vec<Option<u32>>> {
    let mut d: Vec<Vec<Option<u32>>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Some(0) } else if adj[i * n + j] == 1 { Some(1) } else { None }).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            let Some(dik) = d[i][k] else { continue };
            for j in 0..n {
                if let Some(dkj) = d[k][j] {
                    if d[i][j].map_or(true, |cur| dik + dkj < cur) {
                        d[i][j] = Some(dik + dkj);
                    }
                }
            }
        }
    }
    d
}

fn to_f64(v: &[u8]) -> Vec<f64> {
    v.iter().map(|&b| b as f64).collect()
}

fn adjacency_of(x: &[f64], n: usize) -> Adjacency {
    x[..n * n].iter().map(|&v| u8::from(v > 0.5)).collect()
}

pub fn gen_connectivity(n: usize, count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    if n < 2 {
        return Err(Error::Task("connectivity needs >= 2 nodes".into()));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = stream(seed, &[tag::DATA, i as u64]);
            let (adj, coords) = random_digraph(n, (n / 2).max(1), &mut rng);
            connectivity_instance(n, &adj, coords)
        })
        .collect())
}

pub fn connectivity_instance(n: usize, adj: &[u8], coords: Vec<[f64; 2]>) -> ProblemInstance {
    ProblemInstance {
        kind: TaskKind::Connectivity { nodes: n },
        difficulty: Difficulty::Standard,
        x: Tensor::vector(to_f64(adj)),
        y_star: Tensor::vector(to_f64(&reachability(adj, n))),
        meta: Meta::Connectivity { coords },
    }
}

/// Labels agree with breadth-first search from every node.
pub fn connectivity_valid(n: usize, x: &Tensor, y: &Tensor) -> bool {
    if x.numel() != n * n || y.numel() != n * n {
        return false;
    }
    let adj = adjacency_of(x.data(), n);
    (0..n).all(|s| {
        bfs(&adj, n, s)
            .iter()
            .enumerate()
            .all(|(t, d)| y.data()[s * n + t] == if d.is_some() { 1.0 } else { 0.0 })
    })
}

/// Out-degree cap for planning graphs.
pub fn plan_max_degree(n: usize) -> usize {
    (n / 5).max(3)
}

/// One shortest path from `start` to `goal` as `horizon` node indices, taking
/// the lowest-index neighbor that makes progress and padding with the goal.
pub fn plan_path(adj: &[u8], n: usize, dist: &[Vec<Option<u32>>], start: usize, goal: usize, horizon: usize) -> Option<Vec<usize>> {
    let total = dist[start][goal]? as usize;
    if total + 1 > horizon {
        return None;
    }
    let mut path = vec![start];
    let mut u = start;
    while u != goal {
        let du = dist[u][goal]?;
        u = (0..n).find(|&v| adj[u * n + v] == 1 && dist[v][goal] == Some(du - 1))?;
        path.push(u);
    }
    path.resize(horizon, goal);
    Some(path)
}

pub fn path_instance(n: usize, horizon: usize, adj: &[u8], start: usize, goal: usize) -> Option<ProblemInstance> {
    let dist = all_pairs(adj, n);
    let path = plan_path(adj, n, &dist, start, goal, horizon)?;
    let mut x = to_f64(adj);
    x.extend((0..n).map(|v| if v == start { 1.0 } else { 0.0 }));
    x.extend((0..n).map(|v| if v == goal { 1.0 } else { 0.0 }));
    let mut y = vec![0.0; horizon * n];
    for (t, &v) in path.iter().enumerate() {
        y[t * n + v] = 1.0;
    }
    Some(ProblemInstance {
        kind: TaskKind::ShortestPath { nodes: n, horizon },
        difficulty: Difficulty::Standard,
        x: Tensor::vector(x),
        y_star: Tensor::vector(y),
        meta: Meta::ShortestPath { start, goal, dist },
    })
}

const MAX_RETRIES: usize = 1000;

pub fn gen_shortest_path(n: usize, horizon: usize, count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    if n < 2 || horizon < 2 {
        return Err(Error::Task("shortest path needs >= 2 nodes and horizon >= 2".into()));
    }
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, &[tag::DATA, i as u64]);
            for _ in 0..MAX_RETRIES {
                let (adj, _) = random_digraph(n, plan_max_degree(n), &mut rng);
                let dist = all_pairs(&adj, n);
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|s| (0..n).map(move |t| (s, t)))
                    .filter(|&(s, t)| s != t && dist[s][t].is_some_and(|d| (d as usize) < horizon))
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                let (s, t) = pairs[rng.gen_range(0..pairs.len())];
                return Ok(path_instance(n, horizon, &adj, s, t).expect("pair reachable within horizon"));
            }
            Err(Error::Task(format!(
                "no goal reachable within horizon {horizon} after {MAX_RETRIES} graphs (instance {i})"
            )))
        })
        .collect()
}

fn plan_meta(inst: &ProblemInstance) -> Result<(usize, usize, &Vec<Vec<Option<u32>>>)> {
    match &inst.meta {
        Meta::ShortestPath { start, goal, dist } => Ok((*start, *goal, dist)),
        _ => Err(Error::Task("shortest-path instance without path metadata".into())),
    }
}

/// Row 0 is the start, consecutive rows follow edges and never lose progress,
/// the goal is reached along a shortest path and then repeated.
pub fn path_valid(n: usize, horizon: usize, x: &Tensor, y: &Tensor) -> bool {
    if x.numel() != n * n + 2 * n || y.numel() != n * horizon {
        return false;
    }
    let adj = adjacency_of(x.data(), n);
    let start = argmax(&x.data()[n * n..n * n + n]);
    let goal = argmax(&x.data()[n * n + n..]);
    let nodes: Vec<usize> = y.data().chunks(n).map(argmax).collect();
    let dist = bfs(&adj, n, start);
    let Some(total) = dist[goal] else { return false };
    let mut steps = 0;
    for w in nodes.windows(2) {
        if w[0] == goal {
            if w[1] != goal {
                return false;
            }
        } else if adj[w[0] * n + w[1]] == 1 {
            steps += 1;
        } else {
            return false;
        }
    }
    nodes[0] == start && nodes.last() == Some(&goal) && steps == total
}

/// First predicted move is an out-neighbor of the start that is strictly
/// closer to the goal.
pub fn first_action_success(n: usize, inst: &ProblemInstance, pred: &Tensor) -> Result<bool> {
    let (start, goal, dist) = plan_meta(inst)?;
    let next = argmax(&pred.data()[n..2 * n]);
    let edge = inst.x.data()[start * n + next] > 0.5;
    let closer = match (dist[next][goal], dist[start][goal]) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    };
    Ok(edge && closer)
}

/// Expected success of moving to a uniformly random out-neighbor of the start.
pub fn random_neighbor_baseline(inst: &ProblemInstance) -> Result<f64> {
    let TaskKind::ShortestPath { nodes: n, .. } = inst.kind else {
        return Err(Error::Task("baseline needs a shortest-path instance".into()));
    };
    let (start, goal, dist) = plan_meta(inst)?;
    let nbrs: Vec<usize> = (0..n).filter(|&v| inst.x.data()[start * n + v] > 0.5).collect();
    if nbrs.is_empty() {
        return Ok(0.0);
    }
    let good = nbrs
        .iter()
        .filter(|&&v| matches!((dist[v][goal], dist[start][goal]), (Some(a), Some(b)) if a < b))
        .count();
    Ok(good as f64 / nbrs.len() as f64)
}
