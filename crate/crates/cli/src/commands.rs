//! Runs a validated job and serializes its result.

use qergo_core::hilbert::pure_state_joint;
use qergo_core::lattice::build_lattice;
use qergo_core::transform::{quantized_spectrum_check_with, QUANTIZATION_TOL};
use qergo_core::weak::{scan_wavefunction, simulate_sequential_with, simulate_weak_value_with};
use qergo_core::{ccp::ccp_table_with, Execution};
use serde::Serialize;
use serde_json::json;

use crate::scenario::{Job, QuantizeSource};
use crate::verify::run_verification_suite_with;
use crate::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub extension: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifact: Artifact,
    /// False when a check the command performs was violated.
    pub passed: bool,
    /// Human-readable notes for stderr; never part of the artifact.
    pub summary: Option<String>,
}

impl Outcome {
    fn data(format: Format, text: String) -> Self {
        Outcome { artifact: Artifact { extension: format.extension(), bytes: text.into_bytes() }, passed: true, summary: None }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| CliError::Core(e.into()))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Core(e.into());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn run(job: &Job, format: Format, exec: Execution) -> Result<Outcome> {
    match job {
        Job::Verify { dims, seeds_per_dim, root_seed } => {
            let report = run_verification_suite_with(dims, *seeds_per_dim, *root_seed, exec)?;
            let text = match format {
                Format::Json => report.to_json()?,
                Format::Csv => report.to_csv()?,
            };
            Ok(Outcome { passed: report.passed, summary: Some(report.summary()), ..Outcome::data(format, text) })
        }
        Job::Kd { m, a, b, state, column } => {
            let table = ccp_table_with(m, a, b, exec)?;
            let joint = state.as_ref().map(|(s, k)| pure_state_joint((s, *k), a, b)).transpose()?;
            let text = match (format, &joint) {
                (Format::Json, None) => format!("{{\"table\":{}}}", table.to_json()?),
                (Format::Json, Some(j)) => format!("{{\"table\":{},\"joint\":{}}}", table.to_json()?, j.to_json()?),
                (Format::Csv, Some(j)) => j.to_csv()?,
                (Format::Csv, None) => table.column_csv(column.0, column.1)?,
            };
            Ok(Outcome::data(format, text))
        }
        Job::Weak { a, b, m_basis, m, config } => {
            let r = simulate_weak_value_with((&a.0, a.1), (&b.0, b.1), m_basis, *m, config, exec)?;
            let text = match format {
                Format::Json => r.to_json()?,
                Format::Csv => csv_text(
                    &["re", "im", "se_re", "se_im", "analytic_re", "analytic_im", "bias_bound", "shots_total", "shots_postselected"],
                    &[vec![
                        r.estimate.re.to_string(),
                        r.estimate.im.to_string(),
                        r.std_err.0.to_string(),
                        r.std_err.1.to_string(),
                        r.analytic_ref.re.to_string(),
                        r.analytic_ref.im.to_string(),
                        r.bias_bound().to_string(),
                        r.shots_total.to_string(),
                        r.shots_postselected.to_string(),
                    ]],
                )?,
            };
            let note = format!("estimate {:.5} ± ({:.1e}, {:.1e}); within 4 SE or C·g of the analytic value: {}", r.estimate, r.std_err.0, r.std_err.1, r.within_gate(4.0));
            Ok(Outcome { summary: Some(note), ..Outcome::data(format, text) })
        }
        Job::Sequential { a, m_basis, b_basis, shots, seed } => {
            let r = simulate_sequential_with((&a.0, a.1), m_basis, b_basis, *shots, *seed, exec)?;
            let text = match format {
                Format::Json => to_json(&r)?,
                Format::Csv => r.to_csv(m_basis, b_basis)?,
            };
            let note = format!("{} cells outside 4 binomial SE", r.gate_exceedances(4.0));
            Ok(Outcome { summary: Some(note), ..Outcome::data(format, text) })
        }
        Job::Lattice { config, level, p_ref, scan, seed } => {
            let sys = build_lattice(config)?;
            let p_ref = p_ref.unwrap_or(sys.zero_momentum_index());
            let profile = sys.renormalized_profile(*level, p_ref)?;
            let scan = match scan {
                Some(s) => Some(scan_wavefunction(
                    sys.x_basis(),
                    (sys.e_basis(), *level),
                    (sys.p_basis(), p_ref),
                    s.coupling,
                    s.shots_per_point,
                    *seed,
                    exec,
                )?),
                None => None,
            };
            let text = match (format, &scan) {
                (Format::Json, _) => {
                    let doc = json!({
                        "config": config,
                        "level": level,
                        "p_ref": p_ref,
                        "energy": sys.energies()[*level],
                        "energies": sys.energies(),
                        "max_eigen_residual": sys.max_eigen_residual(),
                        "schrodinger_residual": sys.schrodinger_residual(*level, p_ref).ok(),
                        "profile": {
                            "x": sys.x_grid(),
                            "re": profile.iter().map(|v| v.re).collect::<Vec<_>>(),
                            "im": profile.iter().map(|v| v.im).collect::<Vec<_>>(),
                        },
                        "scan": scan,
                    });
                    to_json(&doc)?
                }
                (Format::Csv, Some(s)) => s.to_csv()?,
                (Format::Csv, None) => sys.distribution_csv(&profile)?,
            };
            let summary = scan.as_ref().map(|s| format!("{} of {} scan points outside the gate", s.gate_failures(4.0), s.points.len()));
            Ok(Outcome { summary, ..Outcome::data(format, text) })
        }
        Job::Quantize { source, period, hbar, tolerance } => {
            let values = match source {
                QuantizeSource::Values(v) => v.clone(),
                QuantizeSource::Lattice { config, levels } => build_lattice(config)?.energies()[..*levels].to_vec(),
            };
            let tolerance = tolerance.unwrap_or(QUANTIZATION_TOL);
            let (ok, defect) = quantized_spectrum_check_with(&values, *period, *hbar, tolerance)?;
            let text = match format {
                Format::Json => to_json(&json!({
                    "values": values,
                    "period": period,
                    "hbar": hbar,
                    "tolerance": tolerance,
                    "quantized": ok,
                    "defect": defect,
                }))?,
                Format::Csv => csv_text(&["quantized", "defect", "tolerance"], &[vec![ok.to_string(), defect.to_string(), tolerance.to_string()]])?,
            };
            let note = format!("spectrum {} quantized in units of 2πħ/T (defect {defect:.3e})", if ok { "is" } else { "is not" });
            Ok(Outcome { passed: ok, summary: Some(note), ..Outcome::data(format, text) })
        }
    }
}
