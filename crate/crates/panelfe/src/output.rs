//! Saved results and report formatting for the command-line surface.
//!
//! The saved-results document is a plain-text key/value and matrix format:
//! human-diffable, deterministic field order, floats written in shortest
//! round-trip decimal so reading the file back reproduces the bits.

use std::io::Write;

use nalgebra::DMatrix;

use crate::inference::Z_CRIT_95;
use crate::links::{link_eval, Family};

/// Scalars, macros, and matrices saved by an estimation run.
#[derive(Debug, Clone)]
pub struct SavedResults {
    // scalars
    pub n: usize,
    pub n_drop: usize,
    pub n_group_drop: usize,
    pub n_time_drop: usize,
    pub n_group: usize,
    pub t_min: usize,
    pub t_avg: f64,
    pub t_max: usize,
    pub k: usize,
    pub df_m: usize,
    pub r2_p: f64,
    pub chi2: f64,
    pub p: f64,
    pub ll: f64,
    pub ll_0: f64,
    pub fpc: f64,
    pub rank_v: usize,
    pub rank_v2: usize,
    // macros
    pub cmd: String,
    pub cmdline: String,
    pub depvar: String,
    pub title: String,
    pub title1: String,
    pub title2: String,
    pub title3: String,
    pub chi2type: String,
    pub id: String,
    pub time: String,
    // matrices
    pub colnames: Vec<String>,
    pub b: Vec<f64>,
    pub v: DMatrix<f64>,
    pub b2: Vec<f64>,
    pub v2: DMatrix<f64>,
}

impl SavedResults {
    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "panelfe results 1")?;
        writeln!(out, "scalar N = {}", self.n)?;
        writeln!(out, "scalar N_drop = {}", self.n_drop)?;
        writeln!(out, "scalar N_group_drop = {}", self.n_group_drop)?;
        writeln!(out, "scalar N_time_drop = {}", self.n_time_drop)?;
        writeln!(out, "scalar N_group = {}", self.n_group)?;
        writeln!(out, "scalar T_min = {}", self.t_min)?;
        writeln!(out, "scalar T_avg = {}", self.t_avg)?;
        writeln!(out, "scalar T_max = {}", self.t_max)?;
        writeln!(out, "scalar k = {}", self.k)?;
        writeln!(out, "scalar df_m = {}", self.df_m)?;
        writeln!(out, "scalar r2_p = {}", self.r2_p)?;
        writeln!(out, "scalar chi2 = {}", self.chi2)?;
        writeln!(out, "scalar p = {}", self.p)?;
        writeln!(out, "scalar ll = {}", self.ll)?;
        writeln!(out, "scalar ll_0 = {}", self.ll_0)?;
        writeln!(out, "scalar fpc = {}", self.fpc)?;
        writeln!(out, "scalar rankV = {}", self.rank_v)?;
        writeln!(out, "scalar rankV2 = {}", self.rank_v2)?;
        writeln!(out, "macro cmd = \"{}\"", self.cmd)?;
        writeln!(out, "macro cmdline = \"{}\"", self.cmdline)?;
        writeln!(out, "macro depvar = \"{}\"", self.depvar)?;
        writeln!(out, "macro title = \"{}\"", self.title)?;
        writeln!(out, "macro title1 = \"{}\"", self.title1)?;
        writeln!(out, "macro title2 = \"{}\"", self.title2)?;
        writeln!(out, "macro title3 = \"{}\"", self.title3)?;
        writeln!(out, "macro chi2type = \"{}\"", self.chi2type)?;
        writeln!(out, "macro id = \"{}\"", self.id)?;
        writeln!(out, "macro time = \"{}\"", self.time)?;
        write_vector(out, "b", &self.colnames, &self.b)?;
        write_matrix(out, "V", &self.colnames, &self.v)?;
        write_vector(out, "b2", &self.colnames, &self.b2)?;
        write_matrix(out, "V2", &self.colnames, &self.v2)?;
        writeln!(out, "end")?;
        Ok(())
    }
}

fn write_vector<W: Write>(
    out: &mut W,
    name: &str,
    colnames: &[String],
    values: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "matrix {} : 1 x {} : {}", name, values.len(), colnames.join(" "))?;
    let cells: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    writeln!(out, "{}", cells.join(" "))?;
    Ok(())
}

fn write_matrix<W: Write>(
    out: &mut W,
    name: &str,
    colnames: &[String],
    m: &DMatrix<f64>,
) -> std::io::Result<()> {
    writeln!(
        out,
        "matrix {} : {} x {} : {}",
        name,
        m.nrows(),
        m.ncols(),
        colnames.join(" ")
    )?;
    for r in 0..m.nrows() {
        let cells: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Header block of the printed report.
pub fn format_header(saved: &SavedResults) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<52}{:<16}= {:>10}\n",
        saved.title, "Number of obs", saved.n
    ));
    s.push_str(&format!(
        "{:<52}{:<16}= {:>10.2}\n",
        saved.title1,
        format!("LR chi2({})", saved.df_m),
        saved.chi2
    ));
    let title2 = if saved.title3.is_empty() {
        saved.title2.clone()
    } else {
        format!("{} [{}]", saved.title2, saved.title3)
    };
    s.push_str(&format!("{:<52}{:<16}= {:>10.4}\n", title2, "Prob > chi2", saved.p));
    s.push_str(&format!(
        "{:<52}{:<16}= {:>10.4}\n",
        format!("Log likelihood = {:.4}", saved.ll),
        "Pseudo R2",
        saved.r2_p
    ));
    if saved.n_drop > 0 {
        s.push_str(&format!(
            "dropped: {} observations ({} groups, {} periods) perfectly classified\n",
            saved.n_drop, saved.n_group_drop, saved.n_time_drop
        ));
    }
    s
}

/// Coefficient table with standard errors, z statistics, p-values, and 95%
/// intervals.
pub fn format_coef_table(
    depvar: &str,
    names: &[String],
    b: &[f64],
    se: &[f64],
    family: Family,
) -> String {
    let mut s = String::new();
    let rule = "-".repeat(78);
    s.push_str(&rule);
    s.push('\n');
    s.push_str(&format!(
        "{:>12} | {:>10} {:>10} {:>8} {:>7}   {:>10} {:>10}\n",
        depvar, "coef", "std err", "z", "P>|z|", "[95% conf", "interval]"
    ));
    s.push_str(&rule);
    s.push('\n');
    for j in 0..names.len() {
        let z = if se[j] > 0.0 { b[j] / se[j] } else { f64::NAN };
        let p = 2.0 * (1.0 - link_eval(z.abs(), Family::Probit).f);
        let lo = b[j] - Z_CRIT_95 * se[j];
        let hi = b[j] + Z_CRIT_95 * se[j];
        s.push_str(&format!(
            "{:>12} | {:>10.4} {:>10.4} {:>8.2} {:>7.3}   {:>10.4} {:>10.4}\n",
            names[j], b[j], se[j], z, p, lo, hi
        ));
        let _ = family;
    }
    s.push_str(&rule);
    s.push('\n');
    s
}

/// APE table with standard errors with and without the finite population
/// correction.
pub fn format_ape_table(
    names: &[String],
    delta: &[f64],
    se_fpc: &[f64],
    se_nofpc: &[f64],
    fpc: f64,
) -> String {
    let mut s = String::new();
    let rule = "-".repeat(78);
    s.push_str("Average partial effects\n");
    s.push_str(&rule);
    s.push('\n');
    s.push_str(&format!(
        "{:>12} | {:>10} {:>16} {:>16}\n",
        "variable", "APE", "std err (fpc)", "std err (no fpc)"
    ));
    s.push_str(&rule);
    s.push('\n');
    for j in 0..names.len() {
        s.push_str(&format!(
            "{:>12} | {:>10.4} {:>16.4} {:>16.4}\n",
            names[j], delta[j], se_fpc[j], se_nofpc[j]
        ));
    }
    s.push_str(&rule);
    s.push('\n');
    s.push_str(&format!("fpc = {fpc}\n"));
    s
}
