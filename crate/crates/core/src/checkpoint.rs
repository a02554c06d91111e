//! Parameter checkpoints: a text header listing named tensor shapes and
//! metadata, followed by the flat little-endian f32 payload.
//!
//! ```text
//! goalladder-checkpoint 1
//! meta <key> <value>
//! tensor <name> <dim> <dim> ...
//! end
//! <payload>
//! ```

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "goalladder-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push_tensor(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            values: values.to_vec(),
        });
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("tensor {} {}\n", t.name, dims.join(" ")));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for t in &self.tensors {
            for &v in &t.values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut pos = 0;
        let mut next_line = || -> Result<String> {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| bad("header is not utf-8".into()))?
                .to_string();
            pos += end + 1;
            Ok(line)
        };
        if next_line()? != MAGIC {
            return Err(bad("not a goalladder checkpoint".into()));
        }
        let mut ckpt = Checkpoint::default();
        let mut shapes = Vec::new();
        loop {
            let line = next_line()?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("end") => break,
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad(format!("bad meta line '{line}'")))?;
                    let value = parts.collect::<Vec<_>>().join(" ");
                    ckpt.meta.push((key.to_string(), value));
                }
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| bad(format!("bad tensor line '{line}'")))?;
                    let dims = parts
                        .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad dimension in '{line}'"))))
                        .collect::<Result<Vec<_>>>()?;
                    shapes.push((name.to_string(), dims));
                }
                _ => return Err(bad(format!("unexpected header line '{line}'"))),
            }
        }
        let mut payload = &bytes[pos..];
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            if payload.len() < 4 * n {
                return Err(bad(format!("payload truncated in tensor '{name}'")));
            }
            let values = payload[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            payload = &payload[4 * n..];
            ckpt.tensors.push(Tensor { name, shape, values });
        }
        if !payload.is_empty() {
            return Err(bad(format!("{} trailing payload bytes", payload.len())));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
