use std::path::Path;
use std::time::Instant;

use grainfield::diagnostics::{fit_report, FitReport, ReportInputs};
use grainfield::gmrf::rho_bounds;
use grainfield::mesh::{build_neighborhoods, extract_boundaries, load_mesh, GrainMesh};
use grainfield::model::ModelState;
use grainfield::sampler::{run_chain, FieldKind, Problem, Proposals};
use grainfield::synth::{generate_geometry, simulate_data, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::files::{observations_csv, read_observations, read_table, Manifest, Rates};

pub const TRACE: &str = "trace.csv";
pub const BETA_SNAPSHOTS: &str = "beta_snapshots.csv";
pub const GAMMA_SNAPSHOTS: &str = "gamma_snapshots.csv";
pub const FITTED_MEAN: &str = "fitted_mean.csv";
pub const FINAL_STATE: &str = "final_state.json";
pub const DIAGNOSE_MANIFEST: &str = "diagnose_manifest.json";

#[derive(Serialize, Deserialize)]
pub struct Truth {
    pub spec: SynthSpec,
    pub state: ModelState,
}

#[derive(Serialize, Deserialize)]
pub struct FinalState {
    pub iteration: u64,
    pub state: ModelState,
    pub proposals: Proposals,
}

fn create_out(cfg: &RunConfig) -> Result<&Path, CliError> {
    let out = cfg.out_dir()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(out)
}

fn json(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn load_inputs(cfg: &RunConfig) -> Result<(GrainMesh, Vec<f64>), CliError> {
    let mesh_path = cfg.existing(&cfg.mesh, "mesh")?;
    let obs_path = cfg.existing(&cfg.observations, "observations")?;
    let mesh = load_mesh(&mesh_path)?;
    let y = read_observations(&obs_path, mesh.n_elements())?;
    Ok((mesh, y))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let given = match &cfg.mesh {
        Some(_) => Some(load_mesh(cfg.existing(&cfg.mesh, "mesh")?)?),
        None => None,
    };
    cfg.synth.validate()?;
    let out = create_out(cfg)?;
    let mut manifest = Manifest::new("simulate", cfg, seed);
    let mesh = match given {
        Some(m) => m,
        None => {
            let m = generate_geometry(&cfg.synth)?;
            manifest.add(out, "mesh.txt", m.to_text().as_bytes(), None)?;
            m
        }
    };
    let sim = simulate_data(&mesh, &cfg.synth)?;
    manifest.add(out, "observations.csv", observations_csv(&sim.y).as_bytes(), Some(sim.y.len()))?;
    let truth = Truth {
        spec: cfg.synth.clone(),
        state: sim.truth,
    };
    manifest.add(out, "truth.json", &json(&truth), None)?;
    manifest.save(out, crate::files::MANIFEST)
}

fn vector_csv(name: &str, v: &[f64]) -> String {
    let mut s = format!("element_id,{name}\n");
    for (i, x) in v.iter().enumerate() {
        s.push_str(&format!("{i},{x}\n"));
    }
    s
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let (mesh, y) = load_inputs(cfg)?;
    let out = create_out(cfg)?;
    let mut manifest = Manifest::new("fit", cfg, seed);

    let t0 = Instant::now();
    let problem = Problem::new(mesh, y, cfg.design)?;
    manifest.timings.insert("setup".into(), t0.elapsed().as_secs_f64());
    let t1 = Instant::now();
    let trace = run_chain(&problem, &cfg.priors, &cfg.chain, None)?;
    manifest.timings.insert("chain".into(), t1.elapsed().as_secs_f64());

    manifest.add(out, TRACE, trace.scalar_csv().as_bytes(), Some(trace.rows.len()))?;
    let n_snap = Some(trace.snapshots.len());
    manifest.add(out, BETA_SNAPSHOTS, trace.snapshot_csv(FieldKind::Beta).as_bytes(), n_snap)?;
    manifest.add(out, GAMMA_SNAPSHOTS, trace.snapshot_csv(FieldKind::Gamma).as_bytes(), n_snap)?;
    let fitted = vector_csv("value", &trace.fitted_mean);
    manifest.add(out, FITTED_MEAN, fitted.as_bytes(), Some(trace.fitted_mean.len()))?;
    let final_state = FinalState {
        iteration: cfg.chain.total_iterations() as u64,
        state: trace.final_state.clone(),
        proposals: trace.final_proposals.clone(),
    };
    manifest.add(out, FINAL_STATE, &json(&final_state), None)?;
    for (phase, acc) in [
        ("adapt", &trace.acceptance_adapt),
        ("burn_in", &trace.acceptance_burn),
        ("sampling", &trace.acceptance_sample),
    ] {
        manifest.acceptance.insert(phase.into(), Rates::from(acc));
    }
    manifest.save(out, crate::files::MANIFEST)
}

pub fn diagnose(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let out = cfg.out_dir()?;
    let manifest = Manifest::load(out)?;
    if manifest.command != "fit" {
        return Err(CliError::Config(format!(
            "{} holds a `{}` run, not a fit",
            out.display(),
            manifest.command
        )));
    }
    if manifest.seed != seed {
        return Err(CliError::Config(format!(
            "trace/manifest mismatch: run used seed {}, config gives {seed}",
            manifest.seed
        )));
    }
    if manifest.config_hash != cfg.hash() {
        return Err(CliError::Config(
            "trace/manifest mismatch: config hash differs from the one the run was made with".into(),
        ));
    }
    manifest.verify(out)?;

    let (mesh, y) = load_inputs(cfg)?;
    let bg = extract_boundaries(&mesh)?;
    let (columns, rows) = read_table(&out.join(TRACE))?;
    let (_, fitted_rows) = read_table(&out.join(FITTED_MEAN))?;
    let fitted_mean: Vec<f64> = fitted_rows.iter().map(|r| r[1]).collect();
    let fs_path = out.join(FINAL_STATE);
    let text = std::fs::read_to_string(&fs_path).map_err(|e| CliError::Io(format!("{}: {e}", fs_path.display())))?;
    let final_state: FinalState =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", fs_path.display())))?;
    let p_effective = cfg
        .diagnostics
        .p_effective
        .unwrap_or(mesh.n_grains() + bg.dim_beta() + bg.dim_gamma());

    let report = fit_report(&ReportInputs {
        mesh: &mesh,
        boundaries: &bg,
        y: &y,
        fitted_mean: &fitted_mean,
        state: &final_state.state,
        state_iteration: final_state.iteration,
        columns: &columns,
        rows: &rows,
        p_effective,
        bins: cfg.diagnostics.bins,
    })?;

    let mut dm = Manifest::new("diagnose", cfg, seed);
    write_report(out, &report, &mut dm)?;
    dm.save(out, DIAGNOSE_MANIFEST)
}

fn write_report(out: &Path, report: &FitReport, dm: &mut Manifest) -> Result<(), CliError> {
    dm.add(out, "report.json", &json(report), None)?;
    let mut s = String::from("name,mean,sd,q05,q50,q95,lag1\n");
    for t in &report.summaries {
        s.push_str(&format!("{},{},{},{},{},{},{}\n", t.name, t.mean, t.sd, t.q05, t.q50, t.q95, t.lag1));
    }
    dm.add(out, "summaries.csv", s.as_bytes(), Some(report.summaries.len()))?;
    let mut s = String::from("lower,upper,count,mean,sd\n");
    for b in &report.profile {
        s.push_str(&format!("{},{},{},{},{}\n", b.lower, b.upper, b.count, b.mean, b.sd));
    }
    dm.add(out, "profile.csv", s.as_bytes(), Some(report.profile.len()))?;
    let mut s = String::from("element_id,residual,standardized\n");
    for (i, (r, z)) in report.residuals.iter().zip(&report.standardized_residuals).enumerate() {
        s.push_str(&format!("{i},{r},{z}\n"));
    }
    dm.add(out, "residuals.csv", s.as_bytes(), Some(report.residuals.len()))
}

#[derive(Serialize)]
struct MeshSummary {
    nodes: usize,
    elements: usize,
    grains: usize,
    interface_faces: usize,
    junction_edges: usize,
    dim_beta: usize,
    dim_gamma: usize,
    rho_lower_beta: Option<f64>,
    rho_lower_gamma: Option<f64>,
}

pub fn validate_mesh(cfg: &RunConfig, path: Option<&Path>) -> Result<String, CliError> {
    let path = match path {
        Some(p) if !p.is_file() => {
            return Err(CliError::Config(format!("mesh file {} does not exist", p.display())))
        }
        Some(p) => p.to_path_buf(),
        None => cfg.existing(&cfg.mesh, "mesh")?,
    };
    let mesh = load_mesh(&path)?;
    let bg = extract_boundaries(&mesh)?;
    let graphs = build_neighborhoods(&mesh, &bg);
    let summary = MeshSummary {
        nodes: mesh.n_nodes(),
        elements: mesh.n_elements(),
        grains: mesh.n_grains(),
        interface_faces: bg.faces.len(),
        junction_edges: bg.edges.len(),
        dim_beta: bg.dim_beta(),
        dim_gamma: bg.dim_gamma(),
        rho_lower_beta: rho_bounds(&graphs.second).lower,
        rho_lower_gamma: rho_bounds(&graphs.third).lower,
    };
    Ok(serde_json::to_string_pretty(&summary).expect("serializable"))
}
