use std::fs;
use std::path::Path;
use std::str::FromStr;

use ecoflux_core::discrete::{parse_table, steady_sequence, SteadySequence};
use ecoflux_core::dsl::{parse_model, parse_model_unchecked};
use ecoflux_core::export::{self, Manifest, Table};
use ecoflux_core::indicators::{
    average_matrix, effect_report, efficiency, exposure_series, exposures, recovery_diagnostic,
    residence_times, utility_report,
};
use ecoflux_core::interactions::{classify_all, classify_pair, InteractionSeries};
use ecoflux_core::model::validate_model;
use ecoflux_core::transient::trace_from_trajectory;
use ecoflux_core::{
    solve_decomposed, Basis, ClassThresholds, DecomposedTrajectory, DiactField, EffectReport,
    FlowKind, FlowPath, IntegrationSpec, Model, Severity, SolveError, SolveOptions, Stencil,
    StorageSelection, Variant,
};
use ndarray::Array2;
use serde_json::json;

use crate::args::{
    BasisArg, Command, Common, DiactArgs, IndicesArgs, InteractionArgs, KindArg, ReportArgs, Run,
    TransientArgs,
};
use crate::output::{emit, write_manifest, Artifact};
use crate::{
    discrete, invalid, Classify, CliResult, Failure, EXIT_IO, EXIT_SOLVER, EXIT_VALIDATION,
};

pub fn run(cli: crate::args::Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Simulate(r) => simulate(&r),
        Command::Partition(r) => partition(&r),
        Command::Transient(a) => transient(&a),
        Command::Diact(a) => diact(&a),
        Command::Indices(a) => indices(&a),
        Command::Interactions(a) => interactions(&a),
        Command::Report(a) => report(&a),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))
        .or_exit(EXIT_IO)
}

struct Loaded {
    model: Model,
    text: String,
    label: String,
}

enum Source {
    Model(Box<Loaded>),
    Discrete {
        seq: SteadySequence<f64>,
        text: String,
        label: String,
    },
}

fn load_model(path: &Path) -> CliResult<Loaded> {
    let text = read(path)?;
    let model = parse_model::<f64>(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
        .or_exit(EXIT_VALIDATION)?;
    Ok(Loaded {
        model,
        text,
        label: file_label(path),
    })
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |f| f.to_string_lossy().into_owned(),
    )
}

fn source(run: &Run) -> CliResult<Source> {
    match (&run.model, &run.discrete) {
        (Some(_), Some(_)) => invalid("give either a model file or --discrete, not both"),
        (None, None) => invalid("a model file (or --discrete TABLE) is required"),
        (Some(m), None) => load_model(m).map(|l| Source::Model(Box::new(l))),
        (None, Some(d)) => {
            let text = read(d)?;
            let rows = parse_table::<f64>(&text)
                .map_err(|e| anyhow::anyhow!("{}: {e}", d.display()))
                .or_exit(EXIT_VALIDATION)?;
            let seq = steady_sequence(&rows)
                .map_err(|e| anyhow::anyhow!("{}: {e}", d.display()))
                .or_exit(EXIT_SOLVER)?;
            Ok(Source::Discrete {
                seq,
                text,
                label: file_label(d),
            })
        }
    }
}

fn require_model(run: &Run, command: &str) -> CliResult<Loaded> {
    match source(run)? {
        Source::Model(m) => Ok(*m),
        Source::Discrete { .. } => invalid(format!("`{command}` does not support --discrete")),
    }
}

fn spec(run: &Run, model: &Model) -> CliResult<IntegrationSpec> {
    let d = model.simulate_defaults();
    let samples = run.samples.unwrap_or(d.samples());
    if samples < 5 {
        return invalid(format!("--samples must be at least 5, got {samples}"));
    }
    let s = IntegrationSpec::uniform(run.t0.unwrap_or(d.t0()), run.t1.unwrap_or(d.t1()), samples)
        .tolerances(run.rtol.unwrap_or(d.rtol()), run.atol.unwrap_or(d.atol()));
    if let Err(e) = s.validate() {
        return invalid(e);
    }
    Ok(s)
}

fn settings(spec: &IntegrationSpec) -> serde_json::Value {
    json!({
        "t0": spec.t0,
        "t1": spec.t1,
        "samples": spec.sample_grid.len(),
        "rtol": spec.rtol,
        "atol": spec.atol,
    })
}

fn solve(
    model: &Model,
    spec: &IntegrationSpec,
    opts: &SolveOptions,
) -> CliResult<DecomposedTrajectory> {
    solve_decomposed(model, spec, opts).map_err(|e| {
        let code = match e {
            SolveError::Path(_) | SolveError::Options(_) => EXIT_VALIDATION,
            SolveError::Ode(_) | SolveError::Eval(_) => EXIT_SOLVER,
        };
        Failure {
            code,
            error: anyhow::Error::new(e).context("solver failed"),
        }
    })
}

fn kind(k: KindArg) -> FlowKind {
    match k {
        KindArg::Composite => FlowKind::Composite,
        KindArg::Simple => FlowKind::Simple,
        KindArg::Initial => FlowKind::Initial,
    }
}

fn basis(b: BasisArg) -> Basis {
    match b {
        BasisArg::Flow => Basis::Flow,
        BasisArg::Storage => Basis::Storage,
    }
}

fn variant(s: &str) -> CliResult<Variant> {
    Variant::from_str(s.trim())
        .or_else(|_| invalid(format!("unknown variant `{s}` (use d, i, a, c or t)")))
}

fn compartment(tok: &str, names: &[String]) -> CliResult<usize> {
    let tok = tok.trim();
    if let Some(i) = names.iter().position(|n| n == tok) {
        return Ok(i);
    }
    match tok.parse::<usize>() {
        Ok(i) if (1..=names.len()).contains(&i) => Ok(i - 1),
        _ => invalid(format!("unknown compartment `{tok}`")),
    }
}

fn pair(s: &str, names: &[String]) -> CliResult<(usize, usize)> {
    let Some((a, b)) = s.split_once(',') else {
        return invalid(format!("pair `{s}` must look like `i,k`"));
    };
    Ok((compartment(a, names)?, compartment(b, names)?))
}

fn pairs_or_all(given: &[String], names: &[String]) -> CliResult<Vec<(usize, usize)>> {
    if given.is_empty() {
        let n = names.len();
        return Ok((0..n).flat_map(|i| (0..n).map(move |k| (i, k))).collect());
    }
    given.iter().map(|p| pair(p, names)).collect()
}

pub fn grid_table(grid: &[f64]) -> Table {
    let mut t = Table::new(vec!["t".into()]);
    for &g in grid {
        t.push(vec![Some(g)]);
    }
    t
}

/// Columns `<prefix>_<i>_<k>` of a matrix series.
pub fn matrix_columns(
    prefix: &str,
    names: &[String],
    series: &[Option<Array2<f64>>],
) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let n = names.len();
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        for k in 0..n {
            cols.push(format!("{prefix}_{}_{}", names[i], names[k]));
            values.push(
                series
                    .iter()
                    .map(|m| m.as_ref().map(|m| m[[i, k]]))
                    .collect(),
            );
        }
    }
    (cols, values)
}

fn emit_run(run: &Run, artifacts: &[Artifact]) -> CliResult<()> {
    emit(artifacts, run.out.as_deref(), run.format).map(drop)
}

fn validate(a: &Common) -> CliResult<()> {
    let text = read(&a.model)?;
    let model = parse_model_unchecked::<f64>(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", a.model.display()))
        .or_exit(EXIT_VALIDATION)?;
    let diags = validate_model(&model);
    for d in &diags {
        println!("{d}");
    }
    let errors = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count();
    if errors > 0 {
        return invalid(format!(
            "{}: {errors} validation error(s)",
            a.model.display()
        ));
    }
    println!(
        "ok: {} compartments, {} parameters, {} warning(s)",
        model.n(),
        model.params().len(),
        diags.len()
    );
    Ok(())
}

fn simulate(r: &Run) -> CliResult<()> {
    let m = require_model(r, "simulate")?;
    let spec = spec(r, &m.model)?;
    let traj = solve(&m.model, &spec, &SolveOptions::default())?;
    let table = export::substorage_table(&traj, m.model.names());
    emit_run(r, &[Artifact::Table("substorages".into(), table)])
}

fn partition(r: &Run) -> CliResult<()> {
    match source(r)? {
        Source::Model(m) => {
            let spec = spec(r, &m.model)?;
            let traj = solve(&m.model, &spec, &SolveOptions::default())?;
            let table = export::partition_table(&traj, m.model.names());
            emit_run(r, &[Artifact::Table("partition".into(), table)])
        }
        Source::Discrete { seq, .. } => {
            let names = discrete::names(&seq);
            emit_run(
                r,
                &[Artifact::Table(
                    "partition".into(),
                    discrete::partition_table(&seq, &names),
                )],
            )
        }
    }
}

fn parse_paths(given: &[String], model: &Model, start: Option<f64>) -> CliResult<Vec<FlowPath>> {
    given
        .iter()
        .map(|p| {
            let path = FlowPath::parse(p, model)
                .map_err(|e| anyhow::anyhow!("path `{p}`: {e}"))
                .or_exit(EXIT_VALIDATION)?;
            Ok(match start {
                Some(t) => path.starting_at(t),
                None => path,
            })
        })
        .collect()
}

fn transient_artifacts(traj: &DecomposedTrajectory, names: &[String]) -> Vec<Artifact> {
    (0..traj.layout.paths.len())
        .map(|p| {
            let trace = trace_from_trajectory(traj, p);
            Artifact::Table(
                format!("transient_{}", p + 1),
                export::transient_table(&trace, names),
            )
        })
        .collect()
}

fn transient(a: &TransientArgs) -> CliResult<()> {
    let m = require_model(&a.run, "transient")?;
    let spec = spec(&a.run, &m.model)?;
    let opts = SolveOptions {
        paths: parse_paths(&a.paths, &m.model, a.start)?,
        ..SolveOptions::default()
    };
    let traj = solve(&m.model, &spec, &opts)?;
    emit_run(&a.run, &transient_artifacts(&traj, m.model.names()))
}

fn variants_or_all(given: &[String]) -> CliResult<Vec<Variant>> {
    if given.is_empty() {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for s in given {
        let v = variant(s)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

fn diact(a: &DiactArgs) -> CliResult<()> {
    let variants = variants_or_all(&a.variants)?;
    let kinds: Vec<FlowKind> = if a.kinds.is_empty() {
        vec![FlowKind::Composite]
    } else {
        a.kinds.iter().map(|&k| kind(k)).collect()
    };
    match source(&a.run)? {
        Source::Model(m) => {
            let spec = spec(&a.run, &m.model)?;
            let opts = SolveOptions {
                storages: if a.track_storages {
                    StorageSelection::AllPairs(variants.clone())
                } else {
                    StorageSelection::None
                },
                storage_start: a.storage_start,
                ..SolveOptions::default()
            };
            let traj = solve(&m.model, &spec, &opts)?;
            let field = DiactField::from_trajectory(&traj);
            let names = m.model.names();
            let mut out = vec![Artifact::Table(
                "diact".into(),
                export::diact_table(&field, names, &variants, &kinds),
            )];
            if a.track_storages {
                out.push(Artifact::Table(
                    "diact_storages".into(),
                    export::diact_storage_table(&field, names),
                ));
            }
            emit_run(&a.run, &out)
        }
        Source::Discrete { seq, .. } => {
            if kinds != [FlowKind::Composite] || a.track_storages {
                return invalid("--discrete supports composite diact flows only");
            }
            let names = discrete::names(&seq);
            emit_run(
                &a.run,
                &[Artifact::Table(
                    "diact".into(),
                    discrete::diact_table(&seq, &names, &variants),
                )],
            )
        }
    }
}

fn indicator<T>(r: Result<T, ecoflux_core::IndicatorError>) -> CliResult<T> {
    r.or_exit(EXIT_VALIDATION)
}

/// Effect, efficiency and utility columns for the selected pairs.
fn index_table(
    effects: &EffectReport,
    names: &[String],
    pairs: &[(usize, usize)],
) -> CliResult<Table> {
    let utilities = utility_report(effects);
    let l = effects.variant.letter();
    let mut cols = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = Vec::new();
    for &(i, k) in pairs {
        let label = format!("{}_{}", names[i], names[k]);
        let e = effects.entry(i, k);
        let de = indicator(efficiency(&e, Stencil::Fourth))?;
        cols.push(format!("{l}_effect_{label}"));
        cols.push(format!("{l}_efficiency_{label}"));
        cols.push(format!("{l}_utility_{label}"));
        values.push(e.values);
        values.push(de.values);
        values.push(utilities.entry(i, k).values);
    }
    cols.push(format!("{l}_effect_total"));
    values.push(effects.scalar().values);
    Ok(grid_table(&effects.grid).with_columns(cols, values))
}

fn matrix_json(m: &Array2<f64>) -> serde_json::Value {
    json!(m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn indices(a: &IndicesArgs) -> CliResult<()> {
    let v = variant(&a.variant)?;
    let kd = kind(a.kind);
    let b = basis(a.basis);
    match source(&a.run)? {
        Source::Model(m) => {
            let names = m.model.names();
            let pairs = pairs_or_all(&a.pairs, names)?;
            let spec = spec(&a.run, &m.model)?;
            let opts = SolveOptions {
                accumulate: a.window.is_some(),
                storages: match b {
                    Basis::Storage => StorageSelection::AllPairs(vec![v]),
                    Basis::Flow => StorageSelection::None,
                },
                storage_start: a.storage_start,
                ..SolveOptions::default()
            };
            let traj = solve(&m.model, &spec, &opts)?;
            let field = DiactField::from_trajectory(&traj);
            let effects = indicator(effect_report(&field, &traj, v, kd, b))?;
            let mut out = vec![Artifact::Table(
                "indices".into(),
                index_table(&effects, names, &pairs)?,
            )];
            if let Some(w) = &a.window {
                let (t1, t2) = (w[0], w[1]);
                let avg = indicator(average_matrix(&field, &traj, v, kd, b, t1, t2))?;
                let exp = indicator(exposures(&traj, t1, t2))?;
                let body = json!({
                    "variant": v.letter().to_string(),
                    "kind": kd.name(),
                    "basis": b.symbol(),
                    "t1": t1,
                    "t2": t2,
                    "average_effect": avg.as_ref().map(matrix_json),
                    "average_utility": avg.as_ref().map(|m| matrix_json(&ecoflux_core::indicators::utility::skew(m))),
                    "exposure": matrix_json(&exp.e),
                    "exposure_initial": exp.e0.to_vec(),
                    "exposure_total": exp.total,
                });
                out.push(Artifact::Json("averages".into(), export::to_json(&body)));
            }
            emit_run(&a.run, &out)
        }
        Source::Discrete { seq, .. } => {
            if b == Basis::Storage || kd != FlowKind::Composite {
                return invalid("--discrete supports composite flow-based indices only");
            }
            if a.window.is_some() {
                return invalid("--window is not available with --discrete");
            }
            let names = discrete::names(&seq);
            let pairs = pairs_or_all(&a.pairs, &names)?;
            let mut out = vec![Artifact::Table(
                "indices".into(),
                discrete::indices_table(&seq, &names, v, &pairs),
            )];
            if let Some(t) = discrete::exposure_table(&seq, &names) {
                if a.run.out.is_some() {
                    out.push(Artifact::Table("exposures".into(), t));
                }
            }
            emit_run(&a.run, &out)
        }
    }
}

fn thresholds(a: &InteractionArgs) -> CliResult<ClassThresholds> {
    let ok = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
    if !ok(a.commensalism) || !ok(a.competition) || a.competition > a.commensalism {
        return invalid("thresholds must satisfy 0 <= competition <= commensalism <= 1");
    }
    Ok(ClassThresholds {
        commensalism: a.commensalism,
        competition: a.competition,
        ..ClassThresholds::default()
    })
}

fn verdict_lines(series: &[InteractionSeries<f64>], names: &[String]) -> String {
    let mut s = String::new();
    for ser in series {
        let kinds = ser.non_neutral();
        let labels: Vec<String> = if kinds.is_empty() {
            vec!["neutralism".into()]
        } else {
            kinds.iter().map(|k| k.label(names)).collect()
        };
        s.push_str(&format!(
            "{},{}: {}\n",
            names[ser.pair.0],
            names[ser.pair.1],
            labels.join(" ")
        ));
    }
    s
}

fn classify(
    field: &DiactField,
    traj: &DecomposedTrajectory,
    pairs: Option<&[(usize, usize)]>,
    kd: FlowKind,
    b: Basis,
    th: &ClassThresholds,
) -> CliResult<Vec<InteractionSeries<f64>>> {
    let r = match pairs {
        None => classify_all(field, traj, kd, b, th),
        Some(ps) => ps
            .iter()
            .map(|&p| classify_pair(field, traj, p, kd, b, th))
            .collect(),
    };
    r.or_exit(EXIT_VALIDATION)
}

fn interactions(a: &InteractionArgs) -> CliResult<()> {
    let m = require_model(&a.run, "interactions")?;
    let names = m.model.names();
    let th = thresholds(a)?;
    let pairs = a
        .pairs
        .iter()
        .map(|p| pair(p, names))
        .collect::<CliResult<Vec<_>>>()?;
    let b = basis(a.basis);
    let spec = spec(&a.run, &m.model)?;
    let opts = SolveOptions {
        storages: match b {
            Basis::Storage => StorageSelection::AllPairs(Variant::ALL.to_vec()),
            Basis::Flow => StorageSelection::None,
        },
        ..SolveOptions::default()
    };
    let traj = solve(&m.model, &spec, &opts)?;
    let field = DiactField::from_trajectory(&traj);
    let series = classify(
        &field,
        &traj,
        (!pairs.is_empty()).then_some(&pairs[..]),
        kind(a.kind),
        b,
        &th,
    )?;
    print!("{}", verdict_lines(&series, names));
    if a.run.out.is_some() {
        let runs = export::interaction_summary(&series, names);
        emit(
            &[
                Artifact::Table(
                    "interactions".into(),
                    export::interaction_table(&series, names),
                ),
                Artifact::Json("interaction_runs".into(), export::to_json(&runs)),
            ],
            a.run.out.as_deref(),
            a.run.format,
        )?;
    }
    Ok(())
}

fn report(a: &ReportArgs) -> CliResult<()> {
    let Some(dir) = a.run.out.clone() else {
        return invalid("`report` needs --out DIR");
    };
    if !(a.band > 0.0 && a.band.is_finite()) {
        return invalid("--band must be positive");
    }
    let (artifacts, manifest) = match source(&a.run)? {
        Source::Model(m) => model_report(a, &m)?,
        Source::Discrete { seq, text, label } => {
            if !a.paths.is_empty() || a.reference.is_some() {
                return invalid("--path and --reference need a model file");
            }
            let names = discrete::names(&seq);
            let mut out = vec![
                Artifact::Table("partition".into(), discrete::partition_table(&seq, &names)),
                Artifact::Table(
                    "diact".into(),
                    discrete::diact_table(&seq, &names, &Variant::ALL),
                ),
            ];
            let pairs = pairs_or_all(&[], &names)?;
            for v in Variant::ALL {
                out.push(Artifact::Table(
                    format!("indices_{}", v.letter()),
                    discrete::indices_table(&seq, &names, v, &pairs),
                ));
            }
            out.extend(
                discrete::exposure_table(&seq, &names)
                    .map(|t| Artifact::Table("exposures".into(), t)),
            );
            let manifest = Manifest::new(
                &label,
                &text,
                json!({ "mode": "discrete", "snapshots": seq.len() }),
            );
            (out, manifest)
        }
    };
    let files = emit(&artifacts, Some(&dir), a.run.format)?;
    write_manifest(&dir, manifest, &files)
}

fn model_report(a: &ReportArgs, m: &Loaded) -> CliResult<(Vec<Artifact>, Manifest)> {
    let names = m.model.names();
    let spec = spec(&a.run, &m.model)?;
    let opts = SolveOptions {
        accumulate: true,
        storages: StorageSelection::AllPairs(Variant::ALL.to_vec()),
        paths: parse_paths(&a.paths, &m.model, None)?,
        ..SolveOptions::default()
    };
    let traj = solve(&m.model, &spec, &opts)?;
    let field = DiactField::from_trajectory(&traj);

    let mut out = vec![
        Artifact::Table("substorages".into(), export::substorage_table(&traj, names)),
        Artifact::Table("partition".into(), export::partition_table(&traj, names)),
        Artifact::Table(
            "diact".into(),
            export::diact_table(&field, names, &Variant::ALL, &FlowKind::ALL),
        ),
        Artifact::Table(
            "diact_storages".into(),
            export::diact_storage_table(&field, names),
        ),
    ];
    let pairs = pairs_or_all(&[], names)?;
    for v in Variant::ALL {
        let effects = indicator(effect_report(
            &field,
            &traj,
            v,
            FlowKind::Composite,
            Basis::Flow,
        ))?;
        out.push(Artifact::Table(
            format!("indices_{}", v.letter()),
            index_table(&effects, names, &pairs)?,
        ));
    }

    let res = residence_times(&traj, Stencil::Fourth);
    let mut series: Vec<(String, &ecoflux_core::IndexSeries)> = Vec::new();
    for (i, r) in res.residence.iter().enumerate() {
        series.push((format!("r_{}", names[i]), r));
    }
    if let Some(ra) = &res.reverse_activity {
        for (i, r) in ra.iter().enumerate() {
            series.push((format!("dr_{}", names[i]), r));
        }
    }
    out.push(Artifact::Table(
        "residence".into(),
        export::series_table(&traj.grid, &series),
    ));

    let exp = indicator(exposure_series(&traj, spec.t0))?;
    out.push(Artifact::Table(
        "exposures".into(),
        export::matrix_series_table(&traj.grid, "e", names, &exp),
    ));

    let inter = classify(
        &field,
        &traj,
        None,
        FlowKind::Composite,
        Basis::Flow,
        &ClassThresholds::default(),
    )?;
    out.push(Artifact::Table(
        "interactions".into(),
        export::interaction_table(&inter, names),
    ));
    out.push(Artifact::Json(
        "interaction_runs".into(),
        export::to_json(&export::interaction_summary(&inter, names)),
    ));

    out.extend(transient_artifacts(&traj, names));

    if let Some(t) = a.reference {
        let d = indicator(recovery_diagnostic(&traj, t, a.band))?;
        let body = json!({
            "reference_time": d.reference_time,
            "band": d.band,
            "onset": d.onset,
            "recovered_at": d.recovered_at,
            "interval": d.interval,
            "final_deviation": d.final_deviation,
            "recovered": d.recovered(),
        });
        out.push(Artifact::Json("recovery".into(), export::to_json(&body)));
    }

    let mut settings = settings(&spec);
    settings["paths"] = json!(a.paths);
    settings["reference"] = json!(a.reference);
    settings["band"] = json!(a.band);
    settings["format"] = json!(match a.run.format {
        crate::args::Format::Csv => "csv",
        crate::args::Format::Json => "json",
    });
    Ok((out, Manifest::new(&m.label, &m.text, settings)))
}
