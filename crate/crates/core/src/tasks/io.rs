//! JSON-lines datasets.
//!
//! The first line is a `#` comment naming the format version. Each further
//! line is one instance:
//!
//! ```text
//! {"kind":{"task":"addition","n":8},"difficulty":"standard",
//!  "shapes":{"x":[128],"y_star":[64]},"x":[...],"y_star":[...],"meta":{"type":"none"}}
//! ```
//!
//! Values are decimal text that round-trips to the same `f64`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Difficulty, Meta, ProblemInstance, TaskKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const HEADER: &str = "# ired-dataset v1";

#[derive(Serialize, Deserialize)]
struct Shapes {
    x: Vec<usize>,
    y_star: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    kind: TaskKind,
    difficulty: Difficulty,
    shapes: Shapes,
    x: Vec<f64>,
    y_star: Vec<f64>,
    meta: Meta,
}

pub fn to_line(inst: &ProblemInstance) -> String {
    let rec = Record {
        kind: inst.kind,
        difficulty: inst.difficulty,
        shapes: Shapes {
            x: inst.x.shape().to_vec(),
            y_star: inst.y_star.shape().to_vec(),
        },
        x: inst.x.data().to_vec(),
        y_star: inst.y_star.data().to_vec(),
        meta: inst.meta.clone(),
    };
    serde_json::to_string(&rec).expect("records serialize")
}

pub fn from_line(line: &str) -> Result<ProblemInstance> {
    let rec: Record = serde_json::from_str(line).map_err(|e| Error::Config(format!("bad dataset line: {e}")))?;
    Ok(ProblemInstance {
        kind: rec.kind,
        difficulty: rec.difficulty,
        x: Tensor::new(rec.shapes.x, rec.x)?,
        y_star: Tensor::new(rec.shapes.y_star, rec.y_star)?,
        meta: rec.meta,
    })
}

pub fn write_jsonl(mut w: impl Write, instances: &[ProblemInstance]) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for inst in instances {
        writeln!(w, "{}", to_line(inst))?;
    }
    w.flush()
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<ProblemInstance>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Config(format!("reading dataset: {e}")))?;
        let trimmed = line.trim();
        if i == 0 && trimmed.starts_with('#') && trimmed != HEADER {
            return Err(Error::Config(format!("unsupported dataset header {trimmed:?}")));
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(from_line(trimmed).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{generate, SplitParams};

    #[test]
    fn round_trip_every_task() {
        let kinds = [
            TaskKind::Addition { n: 2 },
            TaskKind::Completion { n: 3, rank: 1 },
            TaskKind::Inverse { n: 3 },
            TaskKind::Sudoku { order: 2 },
            TaskKind::Connectivity { nodes: 5 },
            TaskKind::ShortestPath { nodes: 6, horizon: 6 },
        ];
        for kind in kinds {
            let data = generate(&SplitParams::desk(kind, Difficulty::Harder), Difficulty::Harder, 3, 7).unwrap();
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &data).unwrap();
            let back = read_jsonl(buf.as_slice()).unwrap();
            assert_eq!(back, data);
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), format!("{HEADER}\n"));
        assert!(read_jsonl(buf.as_slice()).unwrap().is_empty());
    }
}
