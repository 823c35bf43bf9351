//! CSV artifacts: `#` metadata lines, a header row, then data. Written to a
//! temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use swipt_lqg::bounds::CostBounds;

/// A finished table waiting to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub comments: Vec<String>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Artifact {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        for c in &self.comments {
            writeln!(buf, "# {c}").expect("write to Vec");
        }
        let mut w = csv::WriterBuilder::new().from_writer(buf);
        w.write_record(&self.header).expect("write to Vec");
        for row in &self.rows {
            w.write_record(row).expect("write to Vec");
        }
        w.into_inner().expect("flush to Vec")
    }
}

/// Shortest round-trip form; `+∞` prints as `inf`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub const BOUNDS_HEADER: [&str; 7] = ["alpha", "eta", "gamma", "j_min_inf", "j_max_inf", "bounded", "which_diverged"];

pub fn bounds_row(b: &CostBounds) -> Vec<String> {
    vec![
        num(b.alpha),
        num(b.eta),
        num(b.gamma),
        num(b.j_min),
        num(b.j_max),
        b.bounded.to_string(),
        b.divergence.map_or("none", |d| d.as_str()).to_string(),
    ]
}

/// Writes every artifact or none: on any failure the files already
/// written in this call and all temporaries are removed.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut done = Vec::new();
    for a in artifacts {
        let target = dir.join(&a.file_name);
        let tmp = dir.join(format!(".{}.tmp", a.file_name));
        let result = fs::write(&tmp, a.to_bytes()).and_then(|()| fs::rename(&tmp, &target));
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        done.push(target);
    }
    Ok(done)
}
