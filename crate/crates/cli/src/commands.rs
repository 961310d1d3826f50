//! One function per subcommand. Each writes its files under the output
//! directory and returns what it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qthermo::collision::{
    quasistatic_work, run_protocol, xy_unitary, ProtocolConfig, TimeRow, TimeSeries,
};
use qthermo::demon::{demon_sample, DemonRecord};
use qthermo::emulator::{
    exact_report, reconstruct_ft, ExperimentCircuits, ExperimentConfig, FtReport, ShotConfig,
};
use qthermo::states::{logistic, thermal_ground_population, CorrelationFamily, QubitHamiltonian};
use qthermo::trajectories::{
    averages_report, detailed_ft, ift, ift_by_memory, ift_by_system_reservoir, AveragesReport,
    Conditioning, FunctionalKind, Scheme, Tables, TwoPointProcess,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{run_verify, VerifyReport};
use crate::config::{RunConfig, SchemeChoice};
use crate::output::{opt_real, real, write_document, write_sidecar, Table};
use crate::Format;

/// Files written and whether a check the command performs failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub check_failure: Option<String>,
}

/// Raised for inputs the model rejects; maps to the validation exit code.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl std::fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn protocol_config(cfg: &RunConfig) -> ProtocolConfig {
    let c = &cfg.collision;
    ProtocolConfig {
        beta: c.beta,
        e_initial: c.e_initial,
        e_final: c.e_final,
        delta_e: c.delta_e,
        g: c.g,
        correlation: CorrelationFamily {
            kind: c.correlation,
            p: logistic(c.beta * c.e_initial),
            noise: c.noise,
        },
        retain_msr: c.retain_msr,
    }
}

#[derive(Serialize)]
struct CollisionSummary {
    steps: usize,
    final_sigma_s: f64,
    final_sigma_s_given_m: f64,
    final_sigma_i: f64,
    total_work: f64,
    quasistatic_work: f64,
    work_gap: f64,
    max_thermal_defect: f64,
}

fn collision_summary(ts: &TimeSeries) -> CollisionSummary {
    let last = ts.last().copied().expect("at least one step");
    let c = &ts.config;
    let w0 = quasistatic_work(c.beta, c.e_initial, c.e_final);
    CollisionSummary {
        steps: ts.steps,
        final_sigma_s: last.sigma_s,
        final_sigma_s_given_m: last.sigma_s_given_m,
        final_sigma_i: last.sigma_i,
        total_work: last.work,
        quasistatic_work: w0,
        work_gap: (last.work - w0).abs(),
        max_thermal_defect: ts.rows.iter().map(|r| r.thermal_defect).fold(0.0, f64::max),
    }
}

pub fn time_series_table(ts: &TimeSeries) -> Table {
    let mut t = Table::new(TimeRow::COLUMNS);
    for r in &ts.rows {
        let mut row = vec![r.step.to_string()];
        row.extend(
            [
                r.e_s,
                r.e_r,
                r.work_quench,
                r.work_coupling,
                r.work,
                r.heat_q_r,
                r.sigma_s,
                r.sigma_s_given_m,
                r.sigma_i,
                r.delta_s_s,
                r.delta_s_s_given_m,
                r.delta_f_s,
                r.delta_f_s_given_m,
                r.correlation_drop,
                r.step_sigma_i,
            ]
            .into_iter()
            .map(real),
        );
        row.push(opt_real(r.step_cmi));
        row.push(real(r.thermal_defect));
        row.push(real(r.memory_drift));
        t.push(row);
    }
    t
}

pub fn cmd_collision(cfg: &RunConfig, out: &Path, format: Format) -> Result<Outcome> {
    let pc = protocol_config(cfg);
    pc.validate().map_err(invalid)?;
    let ts = run_protocol(&pc).map_err(invalid)?;
    ensure_dir(out)?;
    let summary = collision_summary(&ts);
    let mut files = Vec::new();
    match format {
        Format::Csv => {
            let path = out.join("collision.csv");
            time_series_table(&ts).write(&path)?;
            files.push(write_sidecar(&path, "collision", cfg, &summary)?);
            files.push(path);
        }
        Format::Json => {
            let path = out.join("collision.json");
            #[derive(Serialize)]
            struct Data<'a> {
                summary: CollisionSummary,
                rows: &'a [TimeRow],
            }
            write_document(
                &path,
                "collision",
                cfg,
                Data {
                    summary,
                    rows: &ts.rows,
                },
            )?;
            files.push(path);
        }
    }
    Ok(Outcome {
        files,
        check_failure: None,
    })
}

pub fn trajectory_process(cfg: &RunConfig) -> Result<TwoPointProcess> {
    let t = &cfg.trajectories;
    let family = CorrelationFamily {
        kind: t.correlation,
        p: thermal_ground_population(t.beta * t.e_s),
        noise: t.noise,
    };
    let rho = family.state().map_err(invalid)?;
    if !(t.e_r.is_finite() && t.g.is_finite()) {
        return Err(invalid("e_r and g must be finite"));
    }
    TwoPointProcess::new(&rho, QubitHamiltonian::new(t.e_r), t.beta, &xy_unitary(t.g))
        .map_err(invalid)
}

#[derive(Serialize)]
struct FunctionalSummary {
    functional: &'static str,
    ift: f64,
    average: f64,
    conditioned_ift: BTreeMap<String, f64>,
    dft_max_deviation: Option<f64>,
    excluded_outcomes: usize,
}

#[derive(Serialize)]
struct TrajectoryReport {
    schemes: BTreeMap<&'static str, Vec<FunctionalSummary>>,
    averages: AveragesReport,
}

fn scheme_kinds(scheme: Scheme) -> Vec<(FunctionalKind, Conditioning)> {
    match scheme {
        Scheme::Global => vec![
            (FunctionalKind::SigmaSGivenMGlobal, Conditioning::None),
            (FunctionalKind::SigmaS, Conditioning::None),
            (FunctionalKind::SigmaIGlobal, Conditioning::None),
        ],
        Scheme::Local => vec![
            (FunctionalKind::SigmaSGivenMLocal, Conditioning::Memory),
            (FunctionalKind::SigmaS, Conditioning::None),
            (FunctionalKind::SigmaILocal, Conditioning::SystemReservoir),
        ],
    }
}

pub fn cmd_trajectories(cfg: &RunConfig, out: &Path, format: Format) -> Result<Outcome> {
    let process = trajectory_process(cfg)?;
    ensure_dir(out)?;
    let schemes: Vec<Scheme> = match cfg.trajectories.scheme {
        SchemeChoice::Global => vec![Scheme::Global],
        SchemeChoice::Local => vec![Scheme::Local],
        SchemeChoice::Both => vec![Scheme::Global, Scheme::Local],
    };
    let mut files = Vec::new();
    let mut report = TrajectoryReport {
        schemes: BTreeMap::new(),
        averages: averages_report(&process)?,
    };
    for scheme in schemes {
        let tables: Tables = process.tables_for(scheme)?;
        let (fwd, bwd) = (tables.forward(), tables.backward());
        let kinds = scheme_kinds(scheme);
        let funcs: Vec<_> = kinds
            .iter()
            .map(|(k, _)| tables.functional(*k))
            .collect::<Result<_, _>>()?;
        let name = match scheme {
            Scheme::Global => "global",
            Scheme::Local => "local",
        };
        let mut summaries = Vec::new();
        for ((kind, cond), f) in kinds.iter().zip(&funcs) {
            let conditioned_ift = match cond {
                Conditioning::Memory => ift_by_memory(&fwd, f)?
                    .into_iter()
                    .map(|(b, v)| (format!("b={b}"), v))
                    .collect(),
                Conditioning::SystemReservoir => ift_by_system_reservoir(&fwd, f)?
                    .into_iter()
                    .map(|(k, v)| (format!("sr={}", k.label()), v))
                    .collect(),
                Conditioning::None => BTreeMap::new(),
            };
            // the global difference functional has no detailed relation
            let dft_max_deviation = if *kind == FunctionalKind::SigmaIGlobal {
                None
            } else {
                Some(detailed_ft(&fwd, &bwd, f, *cond)?.max_deviation())
            };
            summaries.push(FunctionalSummary {
                functional: kind.name(),
                ift: ift(&fwd, f)?,
                average: qthermo::trajectories::average(&fwd, f)?,
                conditioned_ift,
                dft_max_deviation,
                excluded_outcomes: f.excluded(),
            });
        }
        report.schemes.insert(name, summaries);
        let mut header = vec![
            "trajectory".to_string(),
            "p_forward".into(),
            "p_backward".into(),
        ];
        header.extend(kinds.iter().map(|(k, _)| k.name().to_string()));
        let mut table = Table::new(header);
        for (i, o) in fwd.outcomes.iter().enumerate() {
            let mut row = vec![o.label(), real(fwd.probs[i]), real(bwd.probs[i])];
            row.extend(funcs.iter().map(|f| opt_real(f.values[i])));
            table.push(row);
        }
        match format {
            Format::Csv => {
                let path = out.join(format!("trajectories_{name}.csv"));
                table.write(&path)?;
                files.push(write_sidecar(
                    &path,
                    "trajectories",
                    cfg,
                    serde_json::Value::Null,
                )?);
                files.push(path);
            }
            Format::Json => {
                let path = out.join(format!("trajectories_{name}.json"));
                let rows: Vec<BTreeMap<&str, &String>> = table
                    .rows
                    .iter()
                    .map(|r| table.header.iter().map(String::as_str).zip(r).collect())
                    .collect();
                write_document(&path, "trajectories", cfg, rows)?;
                files.push(path);
            }
        }
    }
    let path = out.join("trajectories_report.json");
    write_document(&path, "trajectories", cfg, &report)?;
    files.push(path);
    Ok(Outcome {
        files,
        check_failure: None,
    })
}

pub const DEMON_COLUMNS: [&str; 11] = [
    "sample_id",
    "c_x",
    "c_y",
    "c_z",
    "delta_s_s",
    "mutual_info_final",
    "memory_entropy_final",
    "dephased_mutual_info_final",
    "joint_entropy_final",
    "system_entropy_initial",
    "kind",
];

pub fn demon_records(
    beta: f64,
    samples: usize,
    seed: u64,
    kind: qthermo::demon::FeedbackKind,
) -> Result<Vec<DemonRecord>> {
    (0..samples)
        .into_par_iter()
        .map(|i| demon_sample(beta, seed, i, kind))
        .collect::<Result<_, _>>()
        .map_err(invalid)
}

#[derive(Serialize)]
struct DemonSummary {
    beta: f64,
    samples: usize,
    max_identity_defect: f64,
    max_delta_s_s: f64,
    min_delta_s_s: f64,
}

pub fn cmd_demon(cfg: &RunConfig, out: &Path, format: Format) -> Result<Outcome> {
    let d = &cfg.demon;
    if d.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(invalid("demon betas must be finite and nonnegative"));
    }
    ensure_dir(out)?;
    let mut files = Vec::new();
    for &beta in &d.betas {
        let recs = demon_records(beta, d.samples, cfg.seed, d.kind)?;
        let summary = DemonSummary {
            beta,
            samples: recs.len(),
            max_identity_defect: recs
                .iter()
                .map(|r| r.identity_defect().abs())
                .fold(0.0, f64::max),
            max_delta_s_s: recs
                .iter()
                .map(|r| r.delta_s_s)
                .fold(f64::NEG_INFINITY, f64::max),
            min_delta_s_s: recs
                .iter()
                .map(|r| r.delta_s_s)
                .fold(f64::INFINITY, f64::min),
        };
        let stem = format!("demon_{}_beta_{beta}", d.kind.name());
        match format {
            Format::Csv => {
                let mut t = Table::new(DEMON_COLUMNS);
                for r in &recs {
                    let mut row = vec![r.sample_id.to_string()];
                    row.extend(
                        [
                            r.params.c_x,
                            r.params.c_y,
                            r.params.c_z,
                            r.delta_s_s,
                            r.mutual_info_final,
                            r.memory_entropy_final,
                            r.dephased_mutual_info_final,
                            r.joint_entropy_final,
                            r.system_entropy_initial,
                        ]
                        .into_iter()
                        .map(real),
                    );
                    row.push(r.feedback_kind.name().to_string());
                    t.push(row);
                }
                let path = out.join(format!("{stem}.csv"));
                t.write(&path)?;
                files.push(write_sidecar(&path, "demon", cfg, &summary)?);
                files.push(path);
            }
            Format::Json => {
                let path = out.join(format!("{stem}.json"));
                #[derive(Serialize)]
                struct Data<'a> {
                    summary: DemonSummary,
                    records: &'a [DemonRecord],
                }
                write_document(
                    &path,
                    "demon",
                    cfg,
                    Data {
                        summary,
                        records: &recs,
                    },
                )?;
                files.push(path);
            }
        }
    }
    Ok(Outcome {
        files,
        check_failure: None,
    })
}

pub fn experiment_config(cfg: &RunConfig) -> ExperimentConfig {
    let e = &cfg.emulate;
    ExperimentConfig {
        beta: e.beta,
        e_s: e.e_s,
        e_r: e.e_r,
        noise: e.noise,
        g: e.g,
        thermal_angle: e.thermal_angle,
    }
}

pub fn shot_config(cfg: &RunConfig) -> ShotConfig {
    let e = &cfg.emulate;
    ShotConfig {
        shots_per_rep: e.shots_per_rep,
        reps: e.reps,
        seed: cfg.seed,
        readout_flip_prob: e.readout_flip_prob,
    }
}

/// The emulated report together with its pass/fail judgement.
#[derive(Serialize)]
pub struct EmulateData {
    pub exact: bool,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub report: FtReport,
    pub ift_within_three_std_errors: BTreeMap<String, bool>,
}

pub fn emulate(
    cfg: &RunConfig,
) -> Result<(
    ExperimentCircuits,
    Option<qthermo::emulator::ExperimentCounts>,
    EmulateData,
)> {
    let ec = experiment_config(cfg);
    let circuits = ExperimentCircuits::build(&ec).map_err(invalid)?;
    let (counts, report) = if cfg.emulate.exact {
        (None, exact_report(&circuits)?)
    } else {
        let shots = shot_config(cfg);
        shots.validate().map_err(invalid)?;
        let counts = circuits.sample(&shots)?;
        let report = reconstruct_ft(&counts)?;
        (Some(counts), report)
    };
    let ift_within_three_std_errors = report
        .functionals
        .iter()
        .map(|f| {
            (
                f.functional.clone(),
                (f.estimate - 1.0).abs() <= 3.0 * f.std_error + 1e-10,
            )
        })
        .collect();
    let data = EmulateData {
        exact: cfg.emulate.exact,
        theta1: circuits.theta1,
        theta2: circuits.theta2,
        theta3: circuits.theta3,
        report,
        ift_within_three_std_errors,
    };
    Ok((circuits, counts, data))
}

pub fn cmd_emulate(cfg: &RunConfig, out: &Path, format: Format) -> Result<Outcome> {
    let (circuits, counts, data) = emulate(cfg)?;
    ensure_dir(out)?;
    let mut files = Vec::new();
    let path = out.join("circuits.json");
    write_document(&path, "emulate", cfg, &circuits)?;
    files.push(path);
    if let Some(counts) = &counts {
        match format {
            Format::Csv => {
                for rep in 0..counts.reps() {
                    let mut t = Table::new(["circuit", "bitstring", "count"]);
                    for (name, h) in counts.named() {
                        for (bits, k) in h.rows(rep) {
                            t.push(vec![name.clone(), bits, k.to_string()]);
                        }
                    }
                    let path = out.join(format!("counts_rep{rep}.csv"));
                    t.write(&path)?;
                    files.push(write_sidecar(
                        &path,
                        "emulate",
                        cfg,
                        serde_json::json!({ "rep": rep }),
                    )?);
                    files.push(path);
                }
            }
            Format::Json => {
                let path = out.join("counts.json");
                write_document(&path, "emulate", cfg, counts)?;
                files.push(path);
            }
        }
    }
    let path = out.join("ft_report.json");
    write_document(&path, "emulate", cfg, &data)?;
    files.push(path);
    Ok(Outcome {
        files,
        check_failure: None,
    })
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path, format: Format) -> Result<Outcome> {
    let v = &cfg.verify;
    if v.instances == 0 {
        return Err(invalid("verify needs at least one instance"));
    }
    let report: VerifyReport = run_verify(v.instances, cfg.seed, v.scheme, v.inject_sign_flip);
    ensure_dir(out)?;
    let mut files = Vec::new();
    let path = out.join("verify_report.json");
    write_document(&path, "verify", cfg, &report)?;
    files.push(path);
    if format == Format::Csv {
        let mut t = Table::new(["check", "instances", "worst_defect", "tolerance", "passed"]);
        for c in &report.checks {
            t.push(vec![
                c.name.clone(),
                c.instances.to_string(),
                real(c.worst_defect),
                real(c.tolerance),
                c.passed.to_string(),
            ]);
        }
        let path = out.join("verify_checks.csv");
        t.write(&path)?;
        files.push(write_sidecar(
            &path,
            "verify",
            cfg,
            serde_json::json!({ "all_passed": report.all_passed }),
        )?);
        files.push(path);
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    let check_failure =
        (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", ")));
    Ok(Outcome {
        files,
        check_failure,
    })
}
