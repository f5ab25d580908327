use std::fs;
use std::path::Path;

use citeq_core::tail::{default_k_range, hill_scan, select_threshold, DescendingSample, TailEstimate};
use citeq_core::{
    calibration_curve, compute_constants, coverage_heatmap, covariate_adjusted_sample, default_zenga_grid, fit_grid,
    generate_synthetic, group_quantile_comparison, group_records, load_dataset, normalize_dataset, save_dataset,
    select_k0, upper_half_convex, zenga_curve, FittedQuantileModel, K0Objective, ModelSpec, NormalizationConstants,
    Observation, PublicationRecord, ScaledRecord, SyntheticSpec, CONVEXITY_TOL,
};

use crate::args::{EvaluateArgs, FitArgs, ModelArgs, PredictArgs, SynthArgs, TailArgs, TransferArgs, ZengaArgs};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Renders a header and rows as LF-terminated CSV.
fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Vec<PublicationRecord>> {
    if !path.is_file() {
        return Err(CliError::Data(format!("cannot read {}: no such file", path.display())));
    }
    load_dataset(path).map_err(|e| match e {
        citeq_core::Error::Io(io) => CliError::Data(format!("cannot read {}: {io}", path.display())),
        other => CliError::Core(other),
    })
}

fn read_model(path: &Path) -> Result<FittedQuantileModel> {
    Ok(FittedQuantileModel::from_json(&read_text(path)?)?)
}

/// The shared cohort year, or "mixed".
fn cohort_label(data: &[PublicationRecord]) -> String {
    match data.first() {
        Some(first) if data.iter().all(|r| r.cohort_year == first.cohort_year) => first.cohort_year.to_string(),
        Some(_) => "mixed".into(),
        None => "empty".into(),
    }
}

fn model_spec(args: &ModelArgs) -> Result<ModelSpec> {
    Ok(ModelSpec::new(args.variant.into(), args.k0)?.with_grid(args.grid.clone()))
}

fn fit_or_select<R: Observation + Sync>(data: &[R], spec: &ModelSpec, args: &ModelArgs) -> Result<FittedQuantileModel> {
    match &args.select_k0 {
        Some(candidates) => {
            let objective = K0Objective::Grouped {
                min_group_size: args.min_group_size,
            };
            let selection = select_k0(data, spec, candidates, objective)?;
            for (k0, value) in &selection.objectives {
                log::info!("k0 = {k0}: grouped calibration error {value}");
            }
            log::info!("selected k0 = {}", selection.best_k0);
            Ok(selection.model)
        }
        None => Ok(fit_grid(data, spec)?),
    }
}

/// Constants of `data` normalized the same way as the model's training cohort.
fn target_constants(
    model_constants: &NormalizationConstants,
    data: &[PublicationRecord],
    label: &str,
) -> Result<NormalizationConstants> {
    let mut target = compute_constants(data, label)?;
    target.normalize_if = model_constants.normalize_if;
    Ok(target)
}

/// The dataset as the model sees it: normalized by its own cohort means
/// when the model was fitted on normalized data.
fn model_view(model: &FittedQuantileModel, data: &[PublicationRecord]) -> Result<Vec<ScaledRecord>> {
    match &model.normalization {
        Some(src) => {
            let target = target_constants(src, data, &cohort_label(data))?;
            Ok(normalize_dataset(data, &target))
        }
        None => Ok(data.iter().map(ScaledRecord::from).collect()),
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let spec = model_spec(&args.model)?;
    let data = load(&args.data)?;
    let model = if args.model.normalize {
        let label = args.label.clone().unwrap_or_else(|| cohort_label(&data));
        let mut constants = compute_constants(&data, &label)?;
        if args.model.keep_raw_if {
            constants = constants.exempt_impact_factor();
        }
        let scaled = normalize_dataset(&data, &constants);
        let mut model = fit_or_select(&scaled, &spec, &args.model)?;
        model.normalization = Some(constants);
        model
    } else {
        fit_or_select(&data, &spec, &args.model)?
    };
    log::info!(
        "fitted {} quantiles on {} records, k0 = {}",
        model.coefficients.len(),
        data.len(),
        model.spec.k0
    );
    write_file(&args.out, &model.to_json()?)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let data = load(&args.data)?;
    let view = model_view(&model, &data)?;
    let unit = match &model.normalization {
        Some(src) => target_constants(src, &data, &cohort_label(&data))?.mean_c_future,
        None => 1.0,
    };
    let mut header = vec!["id".to_string()];
    header.extend(model.grid().points().iter().map(|p| format!("q_{p}")));
    let rows = view
        .iter()
        .map(|r| {
            let cdf = model.predict_conditional_cdf(r.impact_factor, r.c1)?;
            let mut row = vec![r.id.clone()];
            row.extend(cdf.iter().map(|(q, _)| (q * unit).to_string()));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_file(&args.out, &csv_text(&header, rows)?)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let data = load(&args.data)?;
    let view = model_view(&model, &data)?;
    let label = cohort_label(&data);

    let report = calibration_curve(&model, &view, &label)?;
    log::info!("sum of squared calibration errors: {}", report.sum_sq_error);
    let calibration = csv_text(
        &["p", "f"],
        report.points.iter().map(|c| vec![c.p.to_string(), c.f.to_string()]),
    )?;

    let groups = group_records(&view, args.min_group_size);
    let comparison = group_quantile_comparison(&model, &view, &groups, args.p)?;
    let groups_csv = csv_text(
        &["if_bucket", "c1", "size", "predicted_q", "empirical_q"],
        comparison.iter().map(|g| {
            vec![
                g.if_bucket.to_string(),
                g.c1.to_string(),
                g.size.to_string(),
                g.predicted_q.to_string(),
                g.empirical_q.to_string(),
            ]
        }),
    )?;

    let heatmap = coverage_heatmap(&model, &view, args.p)?;
    let heatmap_csv = csv_text(
        &["if_bucket", "c1", "delta"],
        heatmap
            .iter()
            .map(|h| vec![h.if_bucket.to_string(), h.c1.to_string(), h.delta.to_string()]),
    )?;

    write_file(&args.out_dir.join("calibration.csv"), &calibration)?;
    write_file(&args.out_dir.join("groups.csv"), &groups_csv)?;
    write_file(&args.out_dir.join("heatmap.csv"), &heatmap_csv)
}

pub fn tail(args: &TailArgs) -> Result<()> {
    let data = load(&args.data)?;
    let values = match &args.model {
        Some(path) => {
            let model = read_model(path)?;
            let view = model_view(&model, &data)?;
            covariate_adjusted_sample(&model, &view, args.adjust_p)?
        }
        None => data.iter().map(|r| r.c_future as f64).collect(),
    };
    let sample = DescendingSample::new(values)?;
    let n = sample.len();
    let (lo, hi) = default_k_range(n);
    let estimate = match args.k {
        Some(k) => TailEstimate::at_k(&sample, k)?,
        None => {
            if lo > hi {
                return Err(CliError::Usage(format!(
                    "{n} records are too few for automatic threshold selection; pass --k"
                )));
            }
            select_threshold(&sample, lo, hi)?
        }
    };
    let (scan_lo, scan_hi) = match args.k {
        Some(k) => (lo.min(k), hi.max(k)),
        None => (lo, hi),
    };
    let scan = hill_scan(&sample, scan_lo, scan_hi)?;
    log::info!(
        "alpha = {} at k = {} (p* = {})",
        estimate.alpha,
        estimate.k,
        estimate.p_star
    );
    let scan_csv = csv_text(
        &["k", "gamma_hat", "amse_proxy"],
        scan.iter()
            .map(|r| vec![r.k.to_string(), r.gamma_hat.to_string(), r.amse_proxy.to_string()]),
    )?;
    write_file(&args.out_dir.join("tail.json"), &estimate.to_json()?)?;
    write_file(&args.out_dir.join("hill_scan.csv"), &scan_csv)
}

pub fn zenga(args: &ZengaArgs) -> Result<()> {
    let data = load(&args.data)?;
    let sample: Vec<f64> = data.iter().map(|r| r.c_future as f64).collect();
    let curve = zenga_curve(&sample, &default_zenga_grid())?;
    log::info!(
        "upper half convex (tolerance {CONVEXITY_TOL}): {}",
        upper_half_convex(&curve, CONVEXITY_TOL)
    );
    let text = csv_text(
        &["u", "Z"],
        curve.iter().map(|(u, z)| vec![u.to_string(), z.to_string()]),
    )?;
    write_file(&args.out, &text)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = read_text(path)?;
            serde_json::from_str::<SyntheticSpec>(&text).map_err(citeq_core::Error::from)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(s) = args.scale_factor {
        spec.scale_factor = s;
    }
    if let Some(year) = args.cohort_year {
        spec.cohort_year = year;
    }
    if let Some(alpha) = args.alpha {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CliError::Usage(format!("--alpha must be positive, got {alpha}")));
        }
        spec.b = 1.0 / alpha;
    }
    let data = generate_synthetic(&spec)?;
    save_dataset(&args.out, &data)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", args.out.display())))?;
    log::info!("wrote {} records to {}", data.len(), args.out.display());
    Ok(())
}

pub fn transfer(args: &TransferArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let source = model
        .normalization
        .as_ref()
        .ok_or(citeq_core::Error::MissingNormalization)?;
    let data = load(&args.data)?;
    let label = args.label.clone().unwrap_or_else(|| cohort_label(&data));
    let target = target_constants(source, &data, &label)?;
    let view = normalize_dataset(&data, &target);
    let report = calibration_curve(&model, &view, &label)?;
    log::info!(
        "transfer {} -> {}: sum of squared calibration errors {}",
        source.cohort_label,
        label,
        report.sum_sq_error
    );
    let text = csv_text(
        &["p", "f"],
        report.points.iter().map(|c| vec![c.p.to_string(), c.f.to_string()]),
    )?;
    write_file(&args.out, &text)
}
