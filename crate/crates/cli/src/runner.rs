//! Experiment execution: builds the configured objects, runs the
//! computation, writes deterministic JSON records and plot-ready CSV tables.

use std::path::Path;

use serde_json::{json, Value};

use acs4::anti_invariant::{
    h_minus, h_minus_rank_test, path_scan, EigOptions, PathOfAcs,
};
use acs4::calabi_yau::{solve_type_d, TypeDOptions, TypeDProblem};
use acs4::error::{Error, Result};
use acs4::families::{
    build_from_alpha, conformal_structure, intersection_dim, lee_structure, torus_family,
    twisted_from_alpha, Sign,
};
use acs4::field::{AcsField, FormField, MetricField, ScalarField};
use acs4::grid::GridChart;
use acs4::hermitian::{
    curvature, gauduchon_gauge, gauduchon_residual, levi_civita, nijenhuis_field,
    weitzenbock_residual,
};
use acs4::hodge::SolverParams;
use acs4::io::round_for_report;
use acs4::lie::{
    invariant_h_pm, invariant_lee_form, invariant_well_balanced, kodaira_family_h,
    nijenhuis_invariant, parse_model, preset, PresetName,
};
use acs4::pointwise::TwoFormValue;
use acs4::spectral::Fft4;

use crate::config::{ExperimentConfig, ExperimentKind, StructureConfig};
use crate::expr;

pub struct RunOutput {
    pub record: Value,
    pub csv: Option<(String, String)>,
}

fn beta_field(chart: GridChart) -> FormField {
    FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3)),
    )
}

fn j_beta_field(chart: GridChart) -> FormField {
    FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 3).add(&TwoFormValue::basis(1, 2)),
    )
}

fn sign_of(negative: bool) -> Sign {
    if negative {
        Sign::Minus
    } else {
        Sign::Plus
    }
}

/// Builds the structure of a config section over the flat chart, together
/// with the rank-formula prediction when the family provides one.
pub fn build_structure(
    cfg: &StructureConfig,
    chart: GridChart,
) -> Result<(AcsField, Option<usize>)> {
    let g = MetricField::flat(chart);
    let omega = FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3)),
    );
    match cfg {
        StructureConfig::Standard => Ok((AcsField::standard(chart), Some(2))),
        StructureConfig::Torus { f, l, s } => {
            let f = expr::parse(f)?.sample(chart)?;
            let l = expr::parse(l)?.sample(chart)?;
            let s = expr::parse(s)?.sample(chart)?;
            let (acs, predicted) = torus_family(&f, &l, &s)?;
            Ok((acs, Some(predicted)))
        }
        StructureConfig::Lee { a, b, negative } => {
            let alpha = beta_field(chart)
                .scale(*a)
                .add(&j_beta_field(chart).scale(*b));
            Ok((
                lee_structure(&g, &omega, &alpha, sign_of(*negative))?,
                None,
            ))
        }
        StructureConfig::Conformal { a, b, negative } => {
            let alpha = beta_field(chart)
                .scale(*a)
                .add(&j_beta_field(chart).scale(*b));
            Ok((
                conformal_structure(&g, &omega, &alpha, sign_of(*negative))?,
                None,
            ))
        }
        StructureConfig::Build { a, b, r, negative } => {
            let alpha = beta_field(chart)
                .scale(*a)
                .add(&j_beta_field(chart).scale(*b));
            let r = expr::parse(r)?.sample(chart)?;
            Ok((
                build_from_alpha(&g, &omega, &alpha, &r, sign_of(*negative))?,
                None,
            ))
        }
        StructureConfig::Twisted { a, b, r } => {
            let alpha = beta_field(chart)
                .scale(*a)
                .add(&j_beta_field(chart).scale(*b));
            let r = expr::parse(r)?.sample(chart)?;
            Ok((twisted_from_alpha(&g, &omega, &alpha, &r)?, None))
        }
    }
}

fn eig_options(cfg: &ExperimentConfig) -> EigOptions {
    EigOptions {
        seed: cfg.seed.wrapping_add(7),
        inner: SolverParams {
            tol: cfg.tolerances.solver.max(1e-13),
            max_iter: 400,
        },
        rel_threshold: cfg.tolerances.kernel,
        ..EigOptions::default()
    }
}

fn rounded(v: f64) -> Value {
    json!(round_for_report(v))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let chart = cfg.grid.chart()?;
    match cfg.kind {
        ExperimentKind::Hminus => {
            let structure = cfg
                .structure
                .as_ref()
                .ok_or_else(|| Error::Config("missing structure".into()))?;
            let (acs, predicted) = build_structure(structure, chart)?;
            let g = MetricField::flat(chart);
            let report = h_minus(&g, &acs, &eig_options(cfg))?;
            let oracle = h_minus_rank_test(&g, &acs, &SolverParams::default())?;
            let record = json!({
                "kind": "hminus",
                "resolution": chart.resolution(),
                "kernel_dim": report.kernel_dim,
                "h_plus": 6 - report.kernel_dim,
                "gap_ratio": rounded(report.gap_ratio),
                "tolerance": rounded(report.tolerance),
                "eigenvalues": report.eigenvalues.iter().map(|v| rounded(*v)).collect::<Vec<_>>(),
                "rank_test": oracle,
                "predicted": predicted,
            });
            Ok(RunOutput {
                record,
                csv: None,
            })
        }
        ExperimentKind::PathScan => {
            let path_cfg = cfg.path.clone().ok_or_else(|| {
                Error::Config("missing path section".into())
            })?;
            let l_expr = expr::parse(&path_cfg.l)?;
            let s_expr = expr::parse(&path_cfg.s)?;
            let g = MetricField::flat(chart);
            let path = PathOfAcs::new(path_cfg.samples.clone(), move |t| {
                let l_base = l_expr.sample(chart)?;
                let s_base = s_expr.sample(chart)?;
                let l = l_base.scale(t);
                let s = s_base.scale(t);
                let mut f = FormField::zeros(chart, 0);
                for idx in 0..chart.num_points() {
                    let lv = l.comp(0)[idx];
                    let sv = s.comp(0)[idx];
                    let margin = 1.0 - lv * lv - sv * sv;
                    if margin <= 0.0 {
                        return Err(Error::NormViolation(format!(
                            "path sample t = {t} violates the norm constraint"
                        )));
                    }
                    f.comp_mut(0)[idx] = margin.sqrt();
                }
                Ok(torus_family(&f, &l, &s)?.0)
            });
            let scan = path_scan(&path, &g, &eig_options(cfg))?;
            let mut csv = String::from("t,kernel_dim,gap_ratio\n");
            for s in &scan {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    s.t,
                    s.kernel_dim,
                    round_for_report(s.gap_ratio)
                ));
            }
            let record = json!({
                "kind": "path-scan",
                "resolution": chart.resolution(),
                "samples": scan.iter().map(|s| json!({
                    "t": rounded(s.t),
                    "kernel_dim": s.kernel_dim,
                    "gap_ratio": rounded(s.gap_ratio),
                    "upward_jump": s.upward_jump,
                })).collect::<Vec<_>>(),
            });
            Ok(RunOutput {
                record,
                csv: Some(("path-scan.csv".into(), csv)),
            })
        }
        ExperimentKind::Family => {
            let structure = cfg
                .structure
                .as_ref()
                .ok_or_else(|| Error::Config("missing structure".into()))?;
            let (acs, predicted) = build_structure(structure, chart)?;
            let g = MetricField::flat(chart);
            let report = h_minus(&g, &acs, &eig_options(cfg))?;
            let mut csv = String::from("resolution,predicted,measured\n");
            csv.push_str(&format!(
                "{},{},{}\n",
                chart.resolution(),
                predicted.map(|p| p.to_string()).unwrap_or_default(),
                report.kernel_dim
            ));
            let record = json!({
                "kind": "family",
                "resolution": chart.resolution(),
                "predicted": predicted,
                "measured": report.kernel_dim,
                "gap_ratio": rounded(report.gap_ratio),
            });
            Ok(RunOutput {
                record,
                csv: Some(("family.csv".into(), csv)),
            })
        }
        ExperimentKind::Lie => {
            let lie = cfg.lie.as_ref().unwrap();
            let p = if let Some(name) = &lie.preset {
                preset(PresetName::parse(name)?)?
            } else {
                let text = std::fs::read_to_string(lie.model_file.as_ref().unwrap())?;
                let model = parse_model(&text)?;
                let mut p = preset(PresetName::Abelian)?;
                p.model = model;
                p
            };
            let (h_minus_v, h_plus_v, b_plus_v) = invariant_h_pm(&p.model, &p.j, &p.g)?;
            let nij = nijenhuis_invariant(&p.model, &p.j)?;
            let theta = invariant_lee_form(&p.model, &p.j, &p.g, &p.omega)?;
            let wb = invariant_well_balanced(&p.model, &p.j, &p.g, &p.omega)?;
            let family_h = match &lie.family {
                Some([f, l, s]) => Some(kodaira_family_h(&p.model, *f, *l, *s)?),
                None => None,
            };
            let record = json!({
                "kind": "lie",
                "h_minus": h_minus_v,
                "h_plus": h_plus_v,
                "b_plus": b_plus_v,
                "tame_difference": b_plus_v as i64 - h_minus_v as i64,
                "nijenhuis_image_dim": nij.image.len(),
                "lee_form": theta.iter().map(|v| rounded(*v)).collect::<Vec<_>>(),
                "well_balanced": [rounded(wb.res_iii), rounded(wb.res_iv), rounded(wb.res_v)],
                "family_h_minus": family_h,
            });
            Ok(RunOutput { record, csv: None })
        }
        ExperimentKind::Hermitian => {
            let u = match &cfg.conformal_factor {
                Some(text) => expr::parse(text)?.sample(chart)?,
                None => FormField::zeros(chart, 0),
            };
            let g = MetricField::conformally_flat(&u);
            let j = match &cfg.structure {
                Some(sc) => build_structure(sc, chart)?.0,
                None => AcsField::standard(chart),
            };
            // Diagnostics keyed by check name.
            let g_for_j = g.average_with(&j);
            let residual = gauduchon_residual(&g_for_j, &j)?;
            let (gauge_u, _, gauge_residual) = gauduchon_gauge(&g_for_j, &j, 1e-7)?;
            let conn = levi_civita(&g_for_j)?;
            let curv = curvature(&conn, &g_for_j)?;
            let nij = nijenhuis_field(&j)?;
            // Weitzenboeck on a seeded self-dual band-limited field.
            let fft = Fft4::new(chart);
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
            let sd_basis = [
                TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3)),
                TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3)),
                TwoFormValue::basis(0, 3).add(&TwoFormValue::basis(1, 2)),
            ];
            let mut psi = FormField::zeros(chart, 2);
            for b in &sd_basis {
                let mut coeff: ScalarField =
                    FormField::from_fn(chart, 0, |_, _| rng.random_range(-1.0..1.0));
                let sm = fft.band_limit(coeff.comp(0), 2);
                coeff.comp_mut(0).copy_from_slice(&sm);
                psi = psi.add(&FormField::constant_two_form(chart, b).scale_pointwise(&coeff));
            }
            let wz = weitzenbock_residual(&psi, &g_for_j, &curv)?;
            let record = json!({
                "kind": "hermitian",
                "gauduchon_residual": rounded(residual),
                "gauduchon_gauge_residual": rounded(gauge_residual),
                "gauge_factor_range": [
                    rounded(gauge_u.comp(0).iter().cloned().fold(f64::INFINITY, f64::min)),
                    rounded(gauge_u.comp(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                ],
                "nijenhuis_sup": rounded(nij.sup_norm),
                "nijenhuis_max_rank": nij.max_rank(),
                "weyl_sd_sup": rounded(curv.weyl_sd_sup(&g_for_j)?),
                "scalar_curvature_sup": rounded(curv.scalar.max_abs()),
                "weitzenbock_residual": rounded(wz),
            });
            Ok(RunOutput { record, csv: None })
        }
        ExperimentKind::CySolve => {
            let j = match &cfg.structure {
                Some(sc) => build_structure(sc, chart)?.0,
                None => AcsField::standard(chart),
            };
            let f = match &cfg.volume_data {
                Some(text) => expr::parse(text)?.sample(chart)?,
                None => FormField::zeros(chart, 0),
            };
            let g = MetricField::flat(chart);
            let omega = FormField::constant_two_form(
                chart,
                &TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3)),
            );
            let problem = TypeDProblem::new(j, omega, g, &f, &SolverParams::default())?;
            let opts = TypeDOptions {
                tol: cfg.tolerances.solver.max(1e-11) * 10.0,
                ..TypeDOptions::default()
            };
            let sol = solve_type_d(&problem, None, &opts)?;
            let defects = sol.defects(&problem)?;
            let record = json!({
                "kind": "cy-solve",
                "resolution": chart.resolution(),
                "iterations": sol.iterations,
                "residual_history": sol.residual_history.iter().map(|v| rounded(*v)).collect::<Vec<_>>(),
                "class_coefficients": sol.s.iter().map(|v| rounded(*v)).collect::<Vec<_>>(),
                "defects": {
                    "residual": rounded(defects.residual),
                    "closedness": rounded(defects.closedness),
                    "compatibility": rounded(defects.compatibility),
                    "volume": rounded(defects.volume),
                    "gauge": rounded(defects.gauge),
                    "taming_margin": rounded(defects.taming_margin),
                },
            });
            Ok(RunOutput { record, csv: None })
        }
        ExperimentKind::Intersection => {
            let (ja, _) = build_structure(cfg.structure.as_ref().unwrap(), chart)?;
            let (jb, _) = build_structure(cfg.structure_b.as_ref().unwrap(), chart)?;
            let g = MetricField::flat(chart);
            let dim = intersection_dim(&ja, &jb, &g, &SolverParams::default())?;
            let record = json!({
                "kind": "intersection",
                "resolution": chart.resolution(),
                "dimension": dim,
            });
            Ok(RunOutput { record, csv: None })
        }
    }
}

/// Writes the run record (and CSV when produced) under `out_dir`.
pub fn write_outputs(out: &RunOutput, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let json_text = serde_json::to_string_pretty(&out.record)
        .map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out_dir.join("result.json"), json_text)?;
    if let Some((name, csv)) = &out.csv {
        std::fs::write(out_dir.join(name), csv)?;
    }
    Ok(())
}

/// Dumps the fundamental form of the configured structure in the binary
/// field layout with its JSON sidecar.
pub fn dump_field(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let chart = cfg.grid.chart()?;
    let structure = cfg
        .structure
        .as_ref()
        .ok_or_else(|| Error::Config("dump-field needs a 'structure' section".into()))?;
    let (acs, _) = build_structure(structure, chart)?;
    let g = MetricField::flat(chart);
    let omega = acs.fundamental_form(&g)?;
    std::fs::create_dir_all(out_dir)?;
    acs4::io::write_field(&omega, &out_dir.join("fundamental-form.bin"))?;
    Ok(())
}
