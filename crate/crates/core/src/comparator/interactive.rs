use std::io::{BufRead, Write};
use std::path::PathBuf;

use super::{Comparator, ComparatorQuery};
use crate::error::{Error, Result};
use crate::pnm::{observation_extension, write_observation};
use crate::types::Verdict;

/// Asks a person for each verdict. Both observations are written to
/// `scratch_dir` so they can be opened in an image viewer.
pub struct Interactive<R, W> {
    input: R,
    output: W,
    scratch_dir: PathBuf,
}

impl<R: BufRead, W: Write> Interactive<R, W> {
    pub fn new(input: R, output: W, scratch_dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&scratch_dir).map_err(|e| Error::io(&scratch_dir, e))?;
        Ok(Self {
            input,
            output,
            scratch_dir,
        })
    }
}

fn parse_answer(line: &str) -> Option<Verdict> {
    match line.trim().to_ascii_lowercase().as_str() {
        "1" => Some(Verdict::PreferFirst),
        "2" => Some(Verdict::PreferSecond),
        "s" | "same" | "0" | "" => Some(Verdict::NoDecision),
        _ => None,
    }
}

impl<R: BufRead, W: Write> Comparator for Interactive<R, W> {
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict> {
        let ext = observation_extension(&query.first);
        let first = self.scratch_dir.join(format!("query{}_1.{ext}", query.query_id));
        let second = self.scratch_dir.join(format!("query{}_2.{ext}", query.query_id));
        write_observation(&query.first, &first)?;
        write_observation(&query.second, &second)?;
        let io = |e| Error::Comparator(format!("terminal i/o failed: {e}"));
        writeln!(
            self.output,
            "query {}: the goal {}\n  1: {}\n  2: {}",
            query.query_id,
            query.instruction,
            first.display(),
            second.display()
        )
        .map_err(io)?;
        loop {
            write!(self.output, "better image [1/2/same]: ").map_err(io)?;
            self.output.flush().map_err(io)?;
            let mut line = String::new();
            if self.input.read_line(&mut line).map_err(io)? == 0 {
                return Ok(Verdict::NoDecision);
            }
            if let Some(v) = parse_answer(&line) {
                return Ok(v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::types::{LanguageInstruction, Observation};

    #[test]
    fn reads_answers_until_valid() {
        let dir = tempfile::tempdir().unwrap();
        let o = Arc::new(Observation::image(vec![0.5; 4], [2, 2, 1], 0, 0).unwrap());
        let q = ComparatorQuery::new(7, o.clone(), o, LanguageInstruction::new("x").unwrap()).unwrap();
        let mut out = Vec::new();
        let mut c = Interactive::new("maybe\n2\n".as_bytes(), &mut out, dir.path().to_path_buf()).unwrap();
        assert_eq!(c.compare(&q).unwrap(), Verdict::PreferSecond);
        assert_eq!(c.compare(&q).unwrap(), Verdict::NoDecision);
        assert!(dir.path().join("query7_1.pgm").exists());
    }
}
