//! CSV and artifact writing.

use std::fmt::Display;
use std::io;
use std::path::{Path, PathBuf};

/// In-memory CSV with a fixed header. Cells never contain commas here, so no quoting.
pub struct Csv {
    width: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            width: header.len(),
            text,
        }
    }

    pub fn row(&mut self, cells: &[&dyn Display]) {
        assert_eq!(cells.len(), self.width, "row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(&c.to_string());
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "HITTINGDIM_OUT";
pub const DEFAULT_OUT: &str = "hittingdim-out";

/// `--out`, then the config's `out`, then the environment, then the default.
pub fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn write_all(dir: &Path, files: &[(&str, String)]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in files {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[&1, &"x"]);
        c.row(&[&0.5, &true]);
        assert_eq!(c.finish(), "a,b\n1,x\n0.5,true\n");
    }
}
