//! Performance records and their JSON Lines form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::archspace::{validate, Architecture, OpLabel};
use crate::error::{Error, Result};
use crate::netbuild::count_params;

/// One trained instance: architecture, seed, post-quantization F1, parameter count.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceRecord {
    pub arch: Architecture,
    pub seed: u64,
    pub f1_post_quant: f64,
    pub trainable_params: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordJson {
    v: usize,
    edges: Vec<[usize; 2]>,
    ops: Vec<OpLabel>,
    seed: u64,
    f1: f64,
    params: usize,
}

impl PerformanceRecord {
    /// Builds a record with the parameter count derived from the architecture.
    pub fn new(arch: Architecture, seed: u64, f1_post_quant: f64) -> Self {
        Self {
            trainable_params: count_params(&arch),
            arch,
            seed,
            f1_post_quant,
        }
    }

    pub fn check(&self) -> Result<()> {
        let report = validate(&self.arch);
        if !report.ok {
            return Err(Error::InvalidArchitecture(report.to_string()));
        }
        if !(0.0..=1.0).contains(&self.f1_post_quant) {
            return Err(Error::InvalidConfig(format!("f1 {} outside [0, 1]", self.f1_post_quant)));
        }
        let expected = count_params(&self.arch);
        if expected != self.trainable_params {
            return Err(Error::InvalidConfig(format!(
                "params {} does not match the architecture's count {expected}",
                self.trainable_params
            )));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> Result<String> {
        let raw = RecordJson {
            v: self.arch.num_vertices(),
            edges: self.arch.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            ops: self.arch.ops().to_vec(),
            seed: self.seed,
            f1: self.f1_post_quant,
            params: self.trainable_params,
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let raw: RecordJson = serde_json::from_str(line)?;
        let edges: Vec<_> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
        let record = Self {
            arch: Architecture::from_parts(raw.v, &edges, &raw.ops)?,
            seed: raw.seed,
            f1_post_quant: raw.f1,
            trainable_params: raw.params,
        };
        record.check()?;
        Ok(record)
    }
}

/// Reads records, skipping blank lines; errors carry 1-based line numbers.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<PerformanceRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = PerformanceRecord::from_json_line(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[PerformanceRecord]) -> Result<()> {
    for r in records {
        writeln!(writer, "{}", r.to_json_line()?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let r = PerformanceRecord::new(Architecture::minimal(), 2, 0.75);
        let line = r.to_json_line().unwrap();
        assert_eq!(line, r#"{"v":2,"edges":[[0,1]],"ops":[],"seed":2,"f1":0.75,"params":17}"#);
        assert_eq!(PerformanceRecord::from_json_line(&line).unwrap(), r);
    }

    #[test]
    fn bad_lines_are_reported_with_position() {
        let text = "{\"v\":2,\"edges\":[[0,1]],\"ops\":[],\"seed\":0,\"f1\":0.5,\"params\":17}\n\
                    {\"v\":2,\"edges\":[[0,1]],\"ops\":[],\"seed\":0,\"f1\":0.5,\"params\":18}\n";
        match read_jsonl(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let out_of_range = r#"{"v":2,"edges":[[0,1]],"ops":[],"seed":0,"f1":1.5,"params":17}"#;
        assert!(PerformanceRecord::from_json_line(out_of_range).is_err());
        let invalid = r#"{"v":3,"edges":[[0,2]],"ops":["linear"],"seed":0,"f1":0.5,"params":17}"#;
        assert!(PerformanceRecord::from_json_line(invalid).is_err());
    }
}
