use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use maqc_core::analysis::{self, default_selectors, outcome_table};
use maqc_core::dataset::{self, fmt_f64, load_dataset, save_dataset, save_state, TruncatedLabel};
use maqc_core::genmodel::{self, evaluate_weighted, load_checkpoint, save_checkpoint};
use maqc_core::ising::{prepare_ground_state, prepare_paramagnet, scaling_diagnostics};
use maqc_core::protocol::{compare_with_oracle, MAX_ORACLE_SITES};
use maqc_core::{DensityMatrix, Error, MeasurementProtocol, StateVector};

use crate::config::{require, RunConfig};
use crate::CliError;

struct Table {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut t = Self { path: path.to_path_buf(), out: BufWriter::new(file) };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    fn row(&mut self, cells: impl IntoIterator<Item = String>) -> Result<(), CliError> {
        let line = cells.into_iter().collect::<Vec<_>>().join(",");
        writeln!(self.out, "{line}").map_err(|e| CliError::io(&self.path, e))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn states(cfg: &RunConfig) -> Result<(StateVector, StateVector), CliError> {
    match &cfg.states {
        Some(dir) => Ok((
            dataset::load_state_expecting(&dir.join("psi_c.bin"), cfg.n)?,
            dataset::load_state_expecting(&dir.join("psi_a.bin"), cfg.n)?,
        )),
        None => {
            let evo = cfg.evolution();
            Ok((prepare_ground_state(&evo)?.state, prepare_paramagnet(&evo)?))
        }
    }
}

fn protocol(cfg: &RunConfig) -> Result<MeasurementProtocol, CliError> {
    let (psi_c, psi_a) = states(cfg)?;
    Ok(MeasurementProtocol::new(psi_c, psi_a, cfg.protocol())?)
}

fn labels(cfg: &RunConfig, radius: usize) -> Result<Vec<TruncatedLabel>, CliError> {
    if cfg.labels.is_empty() {
        return Ok(TruncatedLabel::all(radius));
    }
    cfg.labels.iter().map(|s| Ok(s.parse()?)).collect()
}

pub fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let evo = cfg.evolution();
    let ground = prepare_ground_state(&evo)?;
    let para = prepare_paramagnet(&evo)?;
    save_state(&ground.state, &cfg.out_path("psi_c.bin"))?;
    save_state(&para, &cfg.out_path("psi_a.bin"))?;
    let mut diag = Table::create(&cfg.out_path("diagnostics.csv"), &["quantity", "value"])?;
    diag.row(["energy".into(), fmt_f64(ground.energy)])?;
    diag.row(["steps".into(), ground.steps.to_string()])?;
    diag.row(["final_delta".into(), fmt_f64(ground.final_delta)])?;
    println!("ground state: N={} E={:.10} after {} steps", cfg.n, ground.energy, ground.steps);
    match scaling_diagnostics(&ground.state) {
        Ok(report) => {
            let xx = report.xx_fit.map_or(f64::NAN, |f| f.exponent);
            for (name, value) in [
                ("x_mean", report.x_mean),
                ("z_mean", report.z_mean),
                ("zz_exponent", report.zz_fit.exponent),
                ("xx_connected_exponent", xx),
                ("entropy_slope", report.entropy_fit.slope),
                ("entropy_intercept", report.entropy_fit.intercept),
            ] {
                diag.row([name.into(), fmt_f64(value)])?;
            }
            println!(
                "<X> = {:.6} (2/pi = {:.6}), <Z> = {:.2e}, ZZ exponent {:.4}, XX exponent {:.4}, entropy slope {:.4}",
                report.x_mean,
                2.0 / std::f64::consts::PI,
                report.z_mean,
                report.zz_fit.exponent,
                xx,
                report.entropy_fit.slope
            );
            let mut rows = Table::create(&cfg.out_path("scaling.csv"), &["separation", "chord", "zz", "xx_connected", "entropy"])?;
            for r in &report.rows {
                rows.row([r.separation.to_string(), fmt_f64(r.chord), fmt_f64(r.zz), fmt_f64(r.xx_connected), fmt_f64(r.entropy)])?;
            }
            rows.finish()?;
        }
        Err(Error::DegenerateFit { .. }) => println!("chain too short for scaling fits"),
        Err(e) => return Err(e.into()),
    }
    diag.finish()
}

pub fn oracle_check(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.n > MAX_ORACLE_SITES {
        return Err(Error::UnsupportedSize { num_sites: cfg.n, max: MAX_ORACLE_SITES }.into());
    }
    let (psi_c, psi_a) = states(cfg)?;
    let mut sweep = cfg.u_sweep.clone();
    sweep.sort_by(|a, b| b.total_cmp(a));
    let mut table = Table::create(&cfg.out_path("oracle.csv"), &["u", "max_trace_distance", "tv_distance"])?;
    let mut rows = Vec::new();
    for &u in &sweep {
        let r = compare_with_oracle(&psi_c, &psi_a, &maqc_core::ProtocolConfig { u, ..cfg.protocol() })?;
        println!("u = {u:<8} max one-body trace distance {:.3e}  outcome TV distance {:.3e}", r.max_trace_distance, r.tv_distance);
        table.row([fmt_f64(u), fmt_f64(r.max_trace_distance), fmt_f64(r.tv_distance)])?;
        rows.push(r);
    }
    table.finish()?;
    for pair in rows.windows(2) {
        let (big, small) = (&pair[0], &pair[1]);
        if small.u <= 0.0 {
            continue;
        }
        let ratio = big.max_trace_distance / small.max_trace_distance;
        if !(ratio > big.u / small.u) {
            return Err(CliError::Check(format!(
                "error ratio {ratio:.3} between u = {} and u = {} is not superlinear",
                big.u, small.u
            )));
        }
    }
    Ok(())
}

pub fn dataset(cfg: &RunConfig) -> Result<(), CliError> {
    let proto = protocol(cfg)?;
    let ds = dataset::build_dataset(&proto, &cfg.evolution(), &cfg.dataset_config()?, cfg.seed)?;
    save_dataset(&ds, &cfg.out_path("dataset.bin"))?;
    if cfg.write_csv {
        ds.write_csv(&cfg.out_path("dataset.csv"))?;
    }
    println!("{} records, {} labels, mode {}", ds.len(), ds.label_weights().len(), ds.metadata.mode);
    Ok(())
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let weighting = cfg.weighting()?;
    let proto = protocol(cfg)?;
    let table = outcome_table(&proto, &default_selectors(cfg.n)?)?;
    for profile in table.variance_profiles(weighting)? {
        let peak = profile.argmax();
        let far = profile.farthest_sites().iter().map(|&i| profile.per_site[i]).fold(0.0, f64::max);
        println!(
            "{:<22} peak at display site {:>3}, farthest/peak = {:.3}",
            profile.kind.name(),
            profile.display_site(peak),
            far / profile.max()
        );
        profile.write_csv(&cfg.out_path(&format!("profile_{}.csv", profile.kind.name())))?;
    }
    let (points, radius) = match &cfg.dataset {
        Some(path) => {
            let ds = load_dataset(path)?;
            let radius = ds.metadata.radius;
            (analysis::offdiag_scatter(&ds, &labels(cfg, radius)?)?, radius)
        }
        None => (analysis::offdiag_scatter_live(&proto, &cfg.evolution(), cfg.radius, &labels(cfg, cfg.radius)?)?, cfg.radius),
    };
    analysis::write_scatter_csv(&points, &cfg.out_path("scatter.csv"))?;
    if radius == 2 {
        let l = |s: &str| s.parse::<TruncatedLabel>().expect("literal label");
        let sep = |a: &str, b: &str| analysis::cloud_separation(&points, &l(a), &l(b), weighting);
        if let (Some(d1), Some(d2), Some(d3)) = (sep("00000", "00100"), sep("00100", "00110"), sep("00100", "00101")) {
            println!("cloud separations: 00000|00100 {d1:.4e}  00100|00110 {d2:.4e}  00100|00101 {d3:.4e}");
        }
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load_dataset(require(&cfg.dataset, "dataset")?)?;
    let model = genmodel::train(&ds, &cfg.architecture(), &cfg.diffusion())?;
    save_checkpoint(&model, &cfg.out_path("model.bin"))?;
    let mut loss = Table::create(&cfg.out_path("loss.csv"), &["epoch", "loss"])?;
    for (i, l) in model.loss_trace.iter().enumerate() {
        loss.row([(i + 1).to_string(), fmt_f64(*l)])?;
    }
    loss.finish()?;
    println!("trained {} epochs, final loss {:?}", model.loss_trace.len(), model.final_loss());
    Ok(())
}

/// Per-label generation seed.
pub fn label_seed(seed: u64, label: &TruncatedLabel) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(label.index() as u64)
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_checkpoint(require(&cfg.model, "model")?)?;
    let radius = (model.label_len - 1) / 2;
    let reference = cfg.dataset.as_deref().map(load_dataset).transpose()?;
    let d = model.rdm_dim;
    let mut header = vec!["label".to_string(), "sample".to_string()];
    for r in 0..d {
        for c in 0..d {
            header.push(format!("rho{r}{c}_re"));
            header.push(format!("rho{r}{c}_im"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut samples = Table::create(&cfg.out_path("generated.csv"), &header_refs)?;
    let mut eval = match reference {
        Some(_) => Some(Table::create(
            &cfg.out_path("evaluation.csv"),
            &["label", "generated", "reference_records", "mean_trace_distance", "generated_violations"],
        )?),
        None => None,
    };
    let mut violations = 0;
    let mut worst = 0.0f64;
    for label in labels(cfg, radius)? {
        let rhos = genmodel::generate(&model, &label, cfg.count, label_seed(cfg.seed, &label))?;
        violations += rhos.iter().filter(|r| !r.is_valid()).count();
        for (i, rho) in rhos.iter().enumerate() {
            let mut row = vec![label.to_string(), i.to_string()];
            for z in rho.row_major() {
                row.push(fmt_f64(z.re));
                row.push(fmt_f64(z.im));
            }
            samples.row(row)?;
        }
        if let (Some(ds), Some(table)) = (&reference, eval.as_mut()) {
            let group = ds.group_by_label(&label)?;
            if group.is_empty() || rhos.is_empty() {
                continue;
            }
            let gen: Vec<(&DensityMatrix, f64)> = rhos.iter().map(|r| (r, 1.0)).collect();
            let m = evaluate_weighted(&gen, &group)?;
            worst = worst.max(m.mean_trace_distance);
            table.row([
                label.to_string(),
                rhos.len().to_string(),
                group.len().to_string(),
                fmt_f64(m.mean_trace_distance),
                m.generated_violations.to_string(),
            ])?;
        }
    }
    samples.finish()?;
    if let Some(t) = eval {
        t.finish()?;
        println!("largest per-label mean trace distance {worst:.4e}");
    }
    println!("constraint violations: {violations}");
    if violations > 0 {
        return Err(CliError::Check(format!("{violations} generated matrices violate density-matrix invariants")));
    }
    Ok(())
}
