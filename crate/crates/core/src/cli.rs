//! The `san` command line. [`run`] parses arguments, dispatches to one
//! subcommand and returns the process exit code: 0 on success, 1 on runtime
//! failure, 2 on usage or configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::config::RunConfig;
use crate::data::{mixture_distances, synth_generate, write_corpus, SynthSpec};
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelKind, ParamCounts};
use crate::nn::Rng;
use crate::rplr::{em_fit, EmConfig, EmMode};
use crate::trainer::{evaluate, load_model, train, Ablation, EvalReport, RunOutput, Split};

fn kebab(key: &str) -> String {
    key.replace('_', "-")
}

/// One `--kebab-key VALUE` flag per run-configuration key, defaults in the help.
fn config_args(cmd: Command) -> Command {
    let defaults = RunConfig::default();
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key = value file; flags given here override it"),
    );
    RunConfig::keys().fold(cmd, |cmd, (key, help)| {
        let d = defaults.get(key).expect("known key");
        cmd.arg(
            Arg::new(key)
                .long(kebab(key))
                .value_name("VALUE")
                .help(format!("{help} [default: {d}]")),
        )
    })
}

fn command() -> Command {
    let arch_flags = |cmd: Command| {
        cmd.arg(
            Arg::new("input_dim")
                .long("input-dim")
                .value_name("N")
                .default_value("5000")
                .help("input width"),
        )
        .arg(
            Arg::new("num_domains")
                .long("num-domains")
                .value_name("M")
                .default_value("4")
                .help("number of domains"),
        )
    };
    Command::new("san")
        .about("Stochastic adversarial networks for multi-domain text classification")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(config_args(
            Command::new("train").about("Train a model and write metrics, checkpoint and results.csv"),
        ))
        .subcommand(
            Command::new("eval")
                .about("Evaluate a checkpoint with the domain-specific feature kept, zeroed or shuffled")
                .arg(
                    Arg::new("checkpoint")
                        .long("checkpoint")
                        .value_name("PATH")
                        .required(true)
                        .help("checkpoint.json or a run directory holding one"),
                )
                .arg(Arg::new("corpus").long("corpus").value_name("DIR").help("corpus directory"))
                .arg(Arg::new("synth").long("synth").value_name("SPEC").help("synthetic data spec"))
                .arg(
                    Arg::new("ablate")
                        .long("ablate")
                        .value_name("VARIANT")
                        .default_value("all")
                        .value_parser(["none", "zero", "shuffle", "all"])
                        .help("feature variant"),
                )
                .arg(
                    Arg::new("split")
                        .long("split")
                        .default_value("test")
                        .value_parser(["test", "dev"])
                        .help("evaluation split"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .default_value("0")
                        .help("seed of the shuffle draws"),
                ),
        )
        .subcommand(
            Command::new("em-fit")
                .about("Fit the inlier/outlier mixture to a headerless CSV of class_id,distance rows")
                .arg(Arg::new("csv").required(true).value_name("CSV").help("input file"))
                .arg(
                    Arg::new("mode")
                        .long("mode")
                        .default_value("paper")
                        .value_parser(["paper", "moment"])
                        .help("update rule"),
                )
                .arg(Arg::new("iters").long("iters").default_value("20").help("maximum iterations"))
                .arg(Arg::new("tol").long("tol").default_value("1e-5").help("stopping threshold"))
                .arg(
                    Arg::new("min_samples")
                        .long("min-samples")
                        .default_value("10")
                        .help("classes with fewer rows keep the prior"),
                )
                .arg(Arg::new("seed").long("seed").default_value("0").help("seed of the mirroring signs")),
        )
        .subcommand(
            Command::new("synth")
                .about("Write a synthetic corpus in TSV form, or mixture distances as CSV")
                .arg(
                    Arg::new("spec")
                        .long("synth")
                        .value_name("SPEC")
                        .default_value("preset=separable")
                        .help("synthetic data spec"),
                )
                .arg(
                    Arg::new("mixture")
                        .long("mixture")
                        .value_name("SPEC")
                        .conflicts_with("spec")
                        .help("pi=..,sd=..,delta=..,n=..,classes=..,seed=.. distance rows instead of a corpus"),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("PATH")
                        .help("output directory (corpus) or file (mixture; default stdout)"),
                ),
        )
        .subcommand(arch_flags(config_args(
            Command::new("param-count").about("Parameter counts per component for both model kinds"),
        )))
        .subcommand(
            Command::new("selfcheck")
                .about("Gradient checks, EM recovery and the sphere-center oracle")
                .arg(Arg::new("seeds").long("seeds").default_value("10").help("seeds per gradient check"))
                .arg(
                    Arg::new("mutate")
                        .long("mutate")
                        .action(ArgAction::SetTrue)
                        .help("flip the sign of the log-variance gradient; the checks must then fail"),
                ),
        )
}

/// Parses `args` (program name first) and runs the subcommand, writing its
/// report to `out`. Diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let m = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match m.subcommand() {
        Some(("train", a)) => cmd_train(a, out),
        Some(("eval", a)) => cmd_eval(a, out),
        Some(("em-fit", a)) => cmd_em_fit(a, out),
        Some(("synth", a)) => cmd_synth(a, out),
        Some(("param-count", a)) => cmd_param_count(a, out),
        Some(("selfcheck", a)) => cmd_selfcheck(a, out),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn parse_num<T: std::str::FromStr>(a: &ArgMatches, id: &str) -> Result<T> {
    let v = a.get_one::<String>(id).expect("has default");
    v.parse()
        .map_err(|_| Error::Config(format!("--{}: cannot parse {v:?}", kebab(id))))
}

/// Config file first, then every flag given on the command line.
pub fn resolve_config(a: &ArgMatches) -> Result<RunConfig> {
    let mut c = match a.get_one::<String>("config") {
        Some(p) => RunConfig::from_file(Path::new(p))?,
        None => RunConfig::default(),
    };
    for (key, _) in RunConfig::keys() {
        if let Some(v) = a.get_one::<String>(key) {
            c.set(key, v)?;
        }
    }
    c.train.validate()?;
    Ok(c)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn cmd_train(a: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve_config(a)?;
    let corpus = cfg.load_data()?;
    let mut run = RunOutput::new(&cfg.out);
    run.header = cfg.echo();
    run.vocabulary = corpus.vocabulary.clone();
    let outcome = train(&cfg.train, &corpus, Some(&run))?;
    let mut csv = String::from("domain,n,accuracy\n");
    writeln!(out, "domain\tn\taccuracy").map_err(io_err)?;
    for d in &outcome.test.per_domain {
        writeln!(out, "{}\t{}\t{}", d.domain, d.n, pct(d.accuracy)).map_err(io_err)?;
        csv.push_str(&format!("{},{},{}\n", d.domain, d.n, d.accuracy));
    }
    if let Some(avg) = outcome.test.average {
        writeln!(out, "AVG\t-\t{}", pct(avg)).map_err(io_err)?;
        csv.push_str(&format!("AVG,,{avg}\n"));
    }
    let p = cfg.out.join("results.csv");
    fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    log::info!(
        "selected epoch {} of {}; artifacts in {}",
        outcome.selected_epoch,
        outcome.metrics.len(),
        cfg.out.display()
    );
    Ok(0)
}

/// Rows are variants, columns the domains plus their average, in percent.
pub fn eval_table(reports: &[EvalReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut s = String::from("variant");
    for d in &first.per_domain {
        s.push('\t');
        s.push_str(&d.domain);
    }
    s.push_str("\tAVG\n");
    for r in reports {
        s.push_str(&r.ablation.to_string());
        for d in &r.per_domain {
            s.push('\t');
            s.push_str(&pct(d.accuracy));
        }
        s.push('\t');
        s.push_str(&r.average.map_or("-".into(), pct));
        s.push('\n');
    }
    s
}

fn cmd_eval(a: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let mut path = PathBuf::from(a.get_one::<String>("checkpoint").expect("required"));
    if path.is_dir() {
        path = path.join("checkpoint.json");
    }
    let (model, ck) = load_model(&path)?;
    let mut data = RunConfig::default();
    if let Some(c) = a.get_one::<String>("corpus") {
        data.set("corpus", c)?;
    }
    if let Some(s) = a.get_one::<String>("synth") {
        data.set("synth", s)?;
    }
    let corpus = data.load_data_with(ck.vocabulary.clone())?;
    let split = match a.get_one::<String>("split").map(String::as_str) {
        Some("dev") => Split::Dev,
        _ => Split::Test,
    };
    let seed: u64 = parse_num(a, "seed")?;
    let variants: Vec<Ablation> = match a.get_one::<String>("ablate").map(String::as_str) {
        Some("all") | None => Ablation::ALL.to_vec(),
        Some(v) => vec![v.parse()?],
    };
    let reports = variants
        .iter()
        .map(|&v| evaluate(&model, &corpus, split, v, seed))
        .collect::<Result<Vec<_>>>()?;
    out.write_all(eval_table(&reports).as_bytes()).map_err(io_err)?;
    Ok(0)
}

/// Reads headerless `class_id,distance` rows. Row numbers in errors are 1-based.
pub fn read_distance_csv(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let (mut labels, mut dists) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: row,
            msg,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad(format!("expected class_id,distance, got {} fields", rec.len())));
        }
        let k: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("class id {:?} is not a non-negative integer", &rec[0])))?;
        let d: f64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("distance {:?} is not a number", &rec[1])))?;
        if !(d >= 0.0 && d.is_finite()) {
            return Err(bad(format!("distance {d} is negative or not finite")));
        }
        labels.push(k);
        dists.push(d);
    }
    if dists.is_empty() {
        return Err(Error::Config(format!("{} has no rows", path.display())));
    }
    Ok((labels, dists))
}

fn cmd_em_fit(a: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let path = PathBuf::from(a.get_one::<String>("csv").expect("required"));
    let (labels, dists) = read_distance_csv(&path)?;
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let mode: EmMode = a.get_one::<String>("mode").expect("has default").parse()?;
    let cfg = EmConfig {
        mode,
        max_iters: parse_num(a, "iters")?,
        tol: parse_num(a, "tol")?,
        min_samples: parse_num(a, "min_samples")?,
        ..EmConfig::default()
    };
    let seed: u64 = parse_num(a, "seed")?;
    let fit = em_fit(&dists, &labels, k, &cfg, &mut Rng::new(seed).derive("em/cli"))?;
    let classes: Vec<serde_json::Value> = fit
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            serde_json::json!({
                "class": i,
                "pi": c.params.pi,
                "sigma": c.params.sigma,
                "sd": c.params.std_dev(),
                "delta": c.params.delta,
                "samples": c.samples,
                "fitted": c.fitted,
                "iterations": c.iterations,
                "max_delta": c.max_delta,
            })
        })
        .collect();
    let v = serde_json::json!({
        "mode": mode,
        "num_classes": k,
        "phi": classes,
        "iterations": fit.iterations(),
        "max_delta": fit.max_delta(),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&v)?).map_err(io_err)?;
    Ok(0)
}

fn cmd_synth(a: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    if let Some(spec) = a.get_one::<String>("mixture") {
        let (mut pi, mut sd, mut delta, mut n, mut classes, mut seed) = (0.7, 0.1, 1.0, 10_000usize, 1usize, 0u64);
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("mixture entry {part:?} is not key=value")))?;
            let bad = || Error::Config(format!("mixture {k}={v:?} is not a valid number"));
            match k.trim() {
                "pi" => pi = v.trim().parse().map_err(|_| bad())?,
                "sd" => sd = v.trim().parse().map_err(|_| bad())?,
                "delta" => delta = v.trim().parse().map_err(|_| bad())?,
                "n" => n = v.trim().parse().map_err(|_| bad())?,
                "classes" => classes = v.trim().parse().map_err(|_| bad())?,
                "seed" => seed = v.trim().parse().map_err(|_| bad())?,
                other => return Err(Error::Config(format!("unknown mixture key {other:?}"))),
            }
        }
        if !(0.0..=1.0).contains(&pi) || sd < 0.0 || delta <= 0.0 || classes == 0 {
            return Err(Error::Config("mixture needs pi in [0,1], sd >= 0, delta > 0, classes >= 1".into()));
        }
        let mut rng = Rng::new(seed).derive("synth/mixture");
        let mut text = String::new();
        for k in 0..classes {
            for d in mixture_distances(pi, sd, delta, n, &mut rng) {
                text.push_str(&format!("{k},{}\n", d.distance));
            }
        }
        match a.get_one::<String>("out") {
            Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e))?,
            None => out.write_all(text.as_bytes()).map_err(io_err)?,
        }
        return Ok(0);
    }
    let spec = SynthSpec::parse(a.get_one::<String>("spec").expect("has default"))?;
    let dir = a
        .get_one::<String>("out")
        .ok_or_else(|| Error::Config("synth needs --out DIR".into()))?;
    let corpus = synth_generate(&spec)?;
    write_corpus(Path::new(dir), &corpus.to_raw())?;
    writeln!(out, "wrote {} domains to {dir}\nspec\t{}", corpus.num_domains(), spec.to_spec_string()).map_err(io_err)?;
    Ok(0)
}

/// Tab-separated counts of both model kinds for `arch`, with the
/// shared-private to SAN ratios.
pub fn param_table(arch: &Architecture) -> String {
    let counts = |kind| Architecture { kind, ..arch.clone() }.param_counts();
    let (san, sp): (ParamCounts, ParamCounts) = (counts(ModelKind::San), counts(ModelKind::SharedPrivate));
    let mut s = String::from("component\tsan\tshared_private\n");
    for (name, f) in [
        ("shared", (|c: &ParamCounts| c.shared) as fn(&ParamCounts) -> usize),
        ("specific", |c| c.specific),
        ("specific_single", |c| c.specific_single),
        ("classifier", |c| c.classifier),
        ("discriminator", |c| c.discriminator),
        ("total", |c| c.total),
    ] {
        s.push_str(&format!("{name}\t{}\t{}\n", f(&san), f(&sp)));
    }
    s.push_str(&format!(
        "ratio_specific\t{:.4}\nratio_total\t{:.4}\n",
        sp.specific as f64 / san.specific as f64,
        sp.total as f64 / san.total as f64
    ));
    s
}

fn cmd_param_count(a: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve_config(a)?;
    let t = &cfg.train;
    let arch = Architecture {
        kind: t.mode,
        input_dim: parse_num(a, "input_dim")?,
        hidden: t.hidden.clone(),
        shared_dim: t.shared_dim,
        specific_dim: t.specific_dim,
        num_classes: cfg.num_classes.unwrap_or(2),
        num_domains: parse_num(a, "num_domains")?,
        dropout: t.dropout,
    };
    arch.validate()?;
    out.write_all(param_table(&arch).as_bytes()).map_err(io_err)?;
    Ok(0)
}

fn cmd_selfcheck(a: &ArgMatches, out: &mut dyn Write) -> Result<i32> {
    let seeds: u64 = parse_num(a, "seeds")?;
    let checks = if a.get_flag("mutate") {
        crate::model::with_log_var_sign_flip(|| crate::selfcheck::run_all(seeds))?
    } else {
        crate::selfcheck::run_all(seeds)?
    };
    out.write_all(crate::selfcheck::table(&checks).as_bytes()).map_err(io_err)?;
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_config_key_is_a_flag() {
        let cmd = command();
        let train = cmd.find_subcommand("train").unwrap();
        for (k, _) in RunConfig::keys() {
            let arg = train.get_arguments().find(|a| a.get_id() == k).unwrap();
            assert_eq!(arg.get_long(), Some(kebab(k).as_str()));
        }
    }

    #[test]
    fn help_lists_defaults() {
        let help = command().find_subcommand_mut("train").unwrap().render_help().to_string();
        assert!(help.contains("[default: 0.0001]"), "{help}");
        assert!(help.contains("--msuda-target"));
    }

    #[test]
    fn unknown_flag_exits_two() {
        let mut sink = Vec::new();
        assert_eq!(run(["san", "train", "--bogus", "1"], &mut sink), 2);
        assert_eq!(run(["san", "train", "--gamma", "2", "--synth", "preset=tiny"], &mut sink), 2);
    }

    #[test]
    fn param_table_ratio() {
        let arch = Architecture {
            kind: ModelKind::San,
            input_dim: 10,
            hidden: vec![4],
            shared_dim: 3,
            specific_dim: 2,
            num_classes: 2,
            num_domains: 4,
            dropout: 0.0,
        };
        let t = param_table(&arch);
        assert!(t.starts_with("component\tsan\tshared_private\n"));
        assert!(t.contains("ratio_specific\t"));
    }
}
