//! Result document and plot files.
//!
//! The result document is line-oriented text:
//!
//! ```text
//! optomo-result 1
//! kind pure
//! config_sha256 <hex>
//! ...header lines: key value [value]...
//! estimate
//! n m re im stderr
//! ...
//! theory
//! n m re im
//! ...
//! end
//! ```
//!
//! Values carry 9 significant digits and errors 3. Wall-clock time is not
//! part of the document, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use optomo::estimator::{MatrixEstimate, TargetKind};
use optomo::sampler::format_significant;
use optomo::{Complex64, ComplexMatrix};

use crate::error::CliError;

pub const DOCUMENT_MAGIC: &str = "optomo-result";
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub n: usize,
    pub m: usize,
    pub value: Complex64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultDocument {
    pub kind: TargetKind,
    pub config_hash: String,
    pub master_seed: u64,
    pub blocks: usize,
    pub samples_per_block: usize,
    pub window: usize,
    pub reference: (usize, usize),
    pub p_hat: f64,
    pub p_std_error: f64,
    pub kappa: Complex64,
    pub phase: Complex64,
    pub truncation_deficit: f64,
    pub hermiticity_defect: Option<f64>,
    pub entries: Vec<Entry>,
    pub theory: Vec<(usize, usize, Complex64)>,
}

fn sig(v: f64) -> String {
    format_significant(v + 0.0, 9)
}

fn err3(v: f64) -> String {
    format_significant(v + 0.0, 3)
}

fn kind_name(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Pure => "pure",
        TargetKind::Choi => "choi",
    }
}

impl ResultDocument {
    pub fn from_estimate(
        estimate: &MatrixEstimate,
        theory: Option<&ComplexMatrix>,
        config_hash: String,
        master_seed: u64,
        samples_per_block: usize,
        window: usize,
    ) -> Self {
        let v = &estimate.values;
        let entries = (0..v.nrows())
            .flat_map(|n| (0..v.ncols()).map(move |m| (n, m)))
            .map(|(n, m)| Entry {
                n,
                m,
                value: v[(n, m)],
                std_error: estimate.std_errors[(n, m)],
            })
            .collect();
        let theory = theory
            .map(|t| {
                (0..t.nrows())
                    .flat_map(|n| (0..t.ncols()).map(move |m| (n, m)))
                    .map(|(n, m)| (n, m, t[(n, m)]))
                    .collect()
            })
            .unwrap_or_default();
        Self {
            kind: estimate.kind,
            config_hash,
            master_seed,
            blocks: estimate.blocks,
            samples_per_block,
            window,
            reference: (estimate.meta.i0, estimate.meta.j0),
            p_hat: estimate.p_hat,
            p_std_error: estimate.p_std_error,
            kappa: estimate.kappa,
            phase: estimate.meta.phase,
            truncation_deficit: estimate.meta.truncation_deficit,
            hermiticity_defect: estimate.meta.hermiticity_defect,
            entries,
            theory,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{DOCUMENT_MAGIC} {DOCUMENT_VERSION}");
        let _ = writeln!(s, "kind {}", kind_name(self.kind));
        let _ = writeln!(s, "config_sha256 {}", self.config_hash);
        let _ = writeln!(s, "master_seed {}", self.master_seed);
        let _ = writeln!(s, "blocks {}", self.blocks);
        let _ = writeln!(s, "samples_per_block {}", self.samples_per_block);
        let _ = writeln!(s, "window {}", self.window);
        let _ = writeln!(s, "reference {} {}", self.reference.0, self.reference.1);
        let _ = writeln!(s, "p_hat {} {}", sig(self.p_hat), err3(self.p_std_error));
        let _ = writeln!(s, "kappa {} {}", sig(self.kappa.re), sig(self.kappa.im));
        let _ = writeln!(s, "phase {} {}", sig(self.phase.re), sig(self.phase.im));
        let _ = writeln!(s, "truncation_deficit {}", err3(self.truncation_deficit));
        if let Some(d) = self.hermiticity_defect {
            let _ = writeln!(s, "hermiticity_defect {}", err3(d));
        }
        let _ = writeln!(s, "estimate");
        for e in &self.entries {
            let _ = writeln!(s, "{} {} {} {} {}", e.n, e.m, sig(e.value.re), sig(e.value.im), err3(e.std_error));
        }
        let _ = writeln!(s, "theory");
        for (n, m, t) in &self.theory {
            let _ = writeln!(s, "{n} {m} {} {}", sig(t.re), sig(t.im));
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |line: usize, msg: &str| CliError::Config(format!("result document line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad(0, "empty document"))?;
        if first != format!("{DOCUMENT_MAGIC} {DOCUMENT_VERSION}") {
            return Err(bad(0, "not a version-1 result document"));
        }
        let mut doc = ResultDocument {
            kind: TargetKind::Pure,
            config_hash: String::new(),
            master_seed: 0,
            blocks: 0,
            samples_per_block: 0,
            window: 0,
            reference: (0, 0),
            p_hat: 0.0,
            p_std_error: 0.0,
            kappa: Complex64::new(0.0, 0.0),
            phase: Complex64::new(1.0, 0.0),
            truncation_deficit: 0.0,
            hermiticity_defect: None,
            entries: Vec::new(),
            theory: Vec::new(),
        };
        #[derive(PartialEq)]
        enum Section {
            Header,
            Estimate,
            Theory,
            Done,
        }
        let mut section = Section::Header;
        for (no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let num = |i: usize| -> Result<f64, CliError> {
                fields
                    .get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| bad(no, "expected a number"))
            };
            let int = |i: usize| -> Result<usize, CliError> {
                fields
                    .get(i)
                    .and_then(|f| f.parse::<usize>().ok())
                    .ok_or_else(|| bad(no, "expected an integer"))
            };
            match (&section, fields[0]) {
                (Section::Done, _) => return Err(bad(no, "content after end")),
                (_, "estimate") => section = Section::Estimate,
                (_, "theory") => section = Section::Theory,
                (_, "end") => section = Section::Done,
                (Section::Header, key) => match key {
                    "kind" => {
                        doc.kind = match fields.get(1) {
                            Some(&"pure") => TargetKind::Pure,
                            Some(&"choi") => TargetKind::Choi,
                            _ => return Err(bad(no, "unknown kind")),
                        }
                    }
                    "config_sha256" => doc.config_hash = fields.get(1).unwrap_or(&"").to_string(),
                    "master_seed" => {
                        doc.master_seed = fields
                            .get(1)
                            .and_then(|f| f.parse().ok())
                            .ok_or_else(|| bad(no, "expected an integer"))?
                    }
                    "blocks" => doc.blocks = int(1)?,
                    "samples_per_block" => doc.samples_per_block = int(1)?,
                    "window" => doc.window = int(1)?,
                    "reference" => doc.reference = (int(1)?, int(2)?),
                    "p_hat" => {
                        doc.p_hat = num(1)?;
                        doc.p_std_error = num(2)?;
                    }
                    "kappa" => doc.kappa = Complex64::new(num(1)?, num(2)?),
                    "phase" => doc.phase = Complex64::new(num(1)?, num(2)?),
                    "truncation_deficit" => doc.truncation_deficit = num(1)?,
                    "hermiticity_defect" => doc.hermiticity_defect = Some(num(1)?),
                    _ => return Err(bad(no, "unknown header key")),
                },
                (Section::Estimate, _) => doc.entries.push(Entry {
                    n: int(0)?,
                    m: int(1)?,
                    value: Complex64::new(num(2)?, num(3)?),
                    std_error: num(4)?,
                }),
                (Section::Theory, _) => doc.theory.push((int(0)?, int(1)?, Complex64::new(num(2)?, num(3)?))),
            }
        }
        if section != Section::Done {
            return Err(bad(text.lines().count(), "missing end marker"));
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn entry(&self, n: usize, m: usize) -> Option<&Entry> {
        self.entries.iter().find(|e| e.n == n && e.m == m)
    }

    pub fn theory_at(&self, n: usize, m: usize) -> Option<Complex64> {
        self.theory.iter().find(|t| t.0 == n && t.1 == m).map(|t| t.2)
    }

    /// Unit phase `u` minimizing `sum |estimate - u theory|^2 / stderr^2`
    /// over the entries present in both; 1 without theory.
    pub fn theory_phase(&self) -> Complex64 {
        let overlap: Complex64 = self
            .entries
            .iter()
            .filter_map(|e| {
                let w = if e.std_error > 0.0 { e.std_error.powi(-2) } else { 1.0 };
                self.theory_at(e.n, e.m).map(|t| e.value * t.conj() * w)
            })
            .sum();
        if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    }

    /// Columns `n,re_A_nn,im_A_nn,stderr,theory_re,theory_im`; theory is
    /// `nan` when absent. Estimates are rotated by [`Self::theory_phase`]
    /// so both columns share one global phase.
    pub fn diagonal_csv(&self) -> String {
        let mut s = String::from("n,re_A_nn,im_A_nn,stderr,theory_re,theory_im\n");
        let back = self.theory_phase().conj();
        for e in self.entries.iter().filter(|e| e.n == e.m) {
            let t = self.theory_at(e.n, e.n).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            let v = e.value * back;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.n,
                sig(v.re),
                sig(v.im),
                err3(e.std_error),
                sig(t.re),
                sig(t.im)
            );
        }
        s
    }

    /// Columns `n,m,re,im,stderr`, in the same phase as [`Self::diagonal_csv`].
    pub fn matrix_csv(&self) -> String {
        let mut s = String::from("n,m,re,im,stderr\n");
        let back = self.theory_phase().conj();
        for e in &self.entries {
            let v = e.value * back;
            let _ = writeln!(s, "{},{},{},{},{}", e.n, e.m, sig(v.re), sig(v.im), err3(e.std_error));
        }
        s
    }

    /// Writes `<prefix>_diagonal.csv` and `<prefix>_matrix.csv`.
    pub fn write_plot_files(&self, prefix: &Path) -> Result<[PathBuf; 2], CliError> {
        let name = prefix.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let diag = prefix.with_file_name(format!("{name}_diagonal.csv"));
        let full = prefix.with_file_name(format!("{name}_matrix.csv"));
        fs::write(&diag, self.diagonal_csv()).map_err(CliError::output(&diag))?;
        fs::write(&full, self.matrix_csv()).map_err(CliError::output(&full))?;
        Ok([diag, full])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultDocument {
        ResultDocument {
            kind: TargetKind::Pure,
            config_hash: "ab".repeat(32),
            master_seed: 7,
            blocks: 3,
            samples_per_block: 10,
            window: 2,
            reference: (0, 1),
            p_hat: 0.5,
            p_std_error: 0.01234,
            kappa: Complex64::new(1.5, -0.25),
            phase: Complex64::new(0.0, 1.0),
            truncation_deficit: 1e-9,
            hermiticity_defect: None,
            entries: (0..4)
                .map(|k| Entry {
                    n: k / 2,
                    m: k % 2,
                    value: Complex64::new(0.1 * k as f64, -0.3),
                    std_error: 0.02,
                })
                .collect(),
            theory: vec![(0, 0, Complex64::new(1.0, 0.0)), (1, 1, Complex64::new(0.25, 0.0))],
        }
    }

    #[test]
    fn render_parse_render_is_stable() {
        let text = sample().render();
        let doc = ResultDocument::parse(&text).unwrap();
        assert_eq!(doc.render(), text);
        assert_eq!(doc.entries.len(), 4);
        assert_eq!(doc.reference, (0, 1));
        assert!(text.contains("p_hat 5.00000000e-1 1.23e-2"));
    }

    #[test]
    fn rejects_truncated_documents() {
        let text = sample().render();
        let cut = text.replace("end\n", "");
        assert!(ResultDocument::parse(&cut).is_err());
        assert!(ResultDocument::parse("something else").is_err());
    }

    #[test]
    fn plot_tables() {
        let doc = sample();
        let diag = doc.diagonal_csv();
        let rows: Vec<&str> = diag.lines().collect();
        assert_eq!(rows[0], "n,re_A_nn,im_A_nn,stderr,theory_re,theory_im");
        assert_eq!(rows.len(), 3);
        assert!(rows[2].starts_with("1,") && rows[2].ends_with(",2.00e-2,2.50000000e-1,0.00000000e0"), "{}", rows[2]);
        assert_eq!(doc.matrix_csv().lines().count(), 5);
    }

    #[test]
    fn plot_tables_share_the_theory_phase() {
        let mut doc = sample();
        for e in &mut doc.entries {
            e.value = -e.value;
        }
        doc.entries[0].value = Complex64::new(-0.9, 0.0);
        let diag = doc.diagonal_csv();
        let row0: Vec<&str> = diag.lines().nth(1).unwrap().split(',').collect();
        assert!(row0[1].parse::<f64>().unwrap() > 0.85, "{diag}");
        assert_eq!(row0[4], "1.00000000e0");
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(sig(-0.0), "0.00000000e0");
    }
}
