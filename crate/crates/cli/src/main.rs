use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gunet_core::config::KvConfig;
use gunet_core::data::{synth_city, target_frames, CityDataset, TrafficMovie, FRAMES_PER_DAY, FRAME_MINUTES, HORIZON_OFFSETS};
use gunet_core::eval::{dump_frames, evaluate, EvalReport, EvalRun, NaiveAverage, Predictor};
use gunet_core::features::Timestamp;
use gunet_core::gradcheck::{run_suite, MODULES};
use gunet_core::model::{Model, ModelConfig};
use gunet_core::train::{mse_metric, sibling, train, TrainConfig, TrainOutputs};
use gunet_core::Error;

#[derive(Parser)]
#[command(name = "gunet", version, about = "Graph U-Net traffic forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city dataset.
    Synth {
        #[arg(long)]
        seed: u64,
        /// Raster size as HxW, e.g. 32x32.
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Point-reflect a dataset and permute its heading channels.
    Mirror {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes CKPT, CKPT.cfg and CKPT.loss.csv.
    Train {
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        /// key = value file with model and training settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on every full hour of every day.
    Eval {
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        /// Also score on the mirrored cities and report MSE* and rel. MSE.
        #[arg(long)]
        mirrored: bool,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        dump_frames: Option<PathBuf>,
    },
    /// Predict the six horizon frames for one seed window.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// DAY:HH:MM, the day index and the wall clock time of the first seed frame.
        #[arg(long)]
        at: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long)]
        module: Option<String>,
    },
    /// Score the naive-average baseline.
    Baseline {
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        mirrored: bool,
    },
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    Ok((h, w))
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => 1,
            Error::Numeric { .. } => 3,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<gunet_core::data::DataError> for Failure {
    fn from(e: gunet_core::data::DataError) -> Self {
        Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn load_cities(dirs: &[PathBuf]) -> Result<Vec<CityDataset>, Failure> {
    let mut cities = dirs.iter().map(|d| CityDataset::load(d)).collect::<Result<Vec<_>, _>>()?;
    cities.sort_by(|a, b| a.name.cmp(&b.name));
    if cities.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(usage("two datasets share a city name"));
    }
    Ok(cities)
}

fn load_model(ckpt: &Path) -> Result<Model, Failure> {
    let cfg_path = sibling(ckpt, "cfg");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let mut kv = KvConfig::parse(&text)?;
    let config = ModelConfig::from_kv(&mut kv)?;
    kv.finish()?;
    Ok(Model::load(config, ckpt)?)
}

fn write_report(path: &Path, original: &EvalRun, mirrored: Option<&EvalRun>) -> Result<(), Failure> {
    match mirrored {
        Some(m) => {
            let report = EvalReport::new(original, m)?;
            write_file(path, &report.to_csv())?;
            write_file(&sibling(path, "hourly.csv"), &report.per_hour_csv())?;
            for r in &report.rows {
                println!("{:<16} MSE {:>10.4}  MSE* {:>10.4}  rel {:.4}", r.name, r.mse, r.mse_star, r.rel());
            }
            println!("overall          MSE {:>10.4}  MSE* {:>10.4}  rel {:.4}", report.overall_mse, report.overall_mse_star, report.overall_rel());
        }
        None => {
            let mut csv = String::from("city,windows,mse\n");
            for c in &original.cities {
                csv.push_str(&format!("{},{},{:.6}\n", c.name, c.windows.len(), c.mse()));
                println!("{:<16} MSE {:>10.4}", c.name, c.mse());
            }
            let n: usize = original.cities.iter().map(|c| c.windows.len()).sum();
            csv.push_str(&format!("overall,{n},{:.6}\n", original.overall()));
            println!("overall          MSE {:>10.4}", original.overall());
            write_file(path, &csv)?;
            let mut hourly = String::from("hour,windows,mean,median,std\n");
            for h in original.per_hour() {
                hourly.push_str(&format!("{},{},{:.6},{:.6},{:.6}\n", h.hour, h.count, h.mean, h.median, h.std));
            }
            write_file(&sibling(path, "hourly.csv"), &hourly)?;
        }
    }
    Ok(())
}

fn score<P: Predictor>(p: &P, cities: &[CityDataset], mirrored: bool, report: &Path) -> Result<(), Failure> {
    let original = evaluate(p, cities, false)?;
    let star = if mirrored { Some(evaluate(p, cities, true)?) } else { None };
    write_report(report, &original, star.as_ref())
}

fn parse_at(at: &str) -> Result<(usize, usize), Failure> {
    let parts: Vec<&str> = at.split(':').collect();
    let [d, h, m] = parts.as_slice() else {
        return Err(usage(format!("--at expects DAY:HH:MM, got `{at}`")));
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| usage(format!("--at expects DAY:HH:MM, got `{at}`")));
    let (day, hour, minute) = (num(d)?, num(h)?, num(m)?);
    if hour >= 24 || minute >= 60 || minute % FRAME_MINUTES != 0 {
        return Err(usage(format!("--at time must be a valid HH:MM on a {FRAME_MINUTES}-minute boundary")));
    }
    Ok((day, (hour * 60 + minute) / FRAME_MINUTES))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth { seed, size, days, out } => {
            let ds = synth_city(seed, size.0, size.1, days)?;
            ds.save(&out)?;
            println!("wrote {} ({}x{}, {} days) to {}", ds.name, size.0, size.1, days, out.display());
        }
        Command::Mirror { input, out } => {
            CityDataset::load(&input)?.mirrored().save(&out)?;
            println!("wrote mirrored dataset to {}", out.display());
        }
        Command::Train {
            data,
            config,
            steps,
            seed,
            out,
        } => {
            let text = match &config {
                Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
                None => String::new(),
            };
            let mut kv = KvConfig::parse(&text)?;
            let model_cfg = ModelConfig::from_kv(&mut kv)?;
            let mut train_cfg = TrainConfig::from_kv(&mut kv)?;
            kv.finish()?;
            if let Some(s) = steps {
                train_cfg.steps = s;
            }
            if let Some(s) = seed {
                train_cfg.seed = s;
            }
            let cities = load_cities(&data)?;
            let mut model = Model::new(model_cfg, train_cfg.seed)?;
            let outputs = TrainOutputs::beside(&out);
            write_file(&sibling(&out, "cfg"), &model.config().to_kv())?;
            let log = train(&mut model, &cities, &train_cfg, Some(&outputs), |r| {
                if (r.step + 1) % 100 == 0 {
                    eprintln!("step {:>7}  lr {:.3e}  train mse {:.6e}", r.step + 1, r.lr, r.train_mse);
                }
            })?;
            if let Some(last) = log.last() {
                println!("trained {} steps, last batch mse {:.6e}", log.len(), last.train_mse);
            }
            println!("checkpoint {}", out.display());
        }
        Command::Eval {
            data,
            ckpt,
            mirrored,
            report,
            dump_frames: dump,
        } => {
            let model = load_model(&ckpt)?;
            let cities = load_cities(&data)?;
            score(&model, &cities, mirrored, &report)?;
            if let Some(dir) = dump {
                for city in &cities {
                    let ctx = model.prepare(city)?;
                    for w in gunet_core::data::evaluation_windows(city, model.in_frames()) {
                        let frames = model.predict(&ctx, city, &w)?;
                        let hour = w.start * FRAME_MINUTES / 60;
                        let sub = dir.join(&city.name).join(format!("day{}_{hour:02}00", city.days[w.day].day_index));
                        dump_frames(&sub, &frames, city.height(), city.width())?;
                    }
                }
                println!("frames written under {}", dir.display());
            }
        }
        Command::Predict { data, ckpt, at, out } => {
            let model = load_model(&ckpt)?;
            let city = CityDataset::load(&data)?;
            let (day_index, start) = parse_at(&at)?;
            let day = city
                .days
                .iter()
                .position(|d| d.day_index == day_index)
                .ok_or_else(|| usage(format!("dataset has no day {day_index}")))?;
            let d = &city.days[day];
            let in_frames = model.in_frames();
            let horizon = in_frames + HORIZON_OFFSETS[HORIZON_OFFSETS.len() - 1];
            if start + horizon > d.movie.frames().min(FRAMES_PER_DAY) {
                return Err(usage("seed window and horizons must fit inside the day"));
            }
            let ts = Timestamp::new((start * FRAME_MINUTES) as u32, d.weekday)?;
            let ctx = model.prepare(&city)?;
            let frames = model.predict_frames(&ctx, &d.movie, start, ts)?;
            let bytes: Vec<u8> = frames.iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8).collect();
            let movie = TrafficMovie::new(HORIZON_OFFSETS.len(), city.height(), city.width(), bytes)?;
            movie.write(&out)?;
            let target = target_frames(&d.movie, start, in_frames)?;
            println!("wrote {} (mse against recorded frames {:.4})", out.display(), mse_metric(&frames, &target)?);
        }
        Command::Gradcheck { module } => {
            let modules: Vec<&str> = match &module {
                Some(m) => vec![m.as_str()],
                None => MODULES.to_vec(),
            };
            let mut failed = Vec::new();
            for m in modules {
                for case in run_suite(m)? {
                    let status = if case.passed() { "ok" } else { "FAIL" };
                    println!(
                        "{status:<4} {}/{}  max rel err {:.3e} (tol {:.0e}, {} elements)",
                        case.module,
                        case.name,
                        case.report.max_rel_error(),
                        case.tolerance,
                        case.report.checked()
                    );
                    if !case.passed() {
                        println!("{}", case.report);
                        failed.push(case.name);
                    }
                }
            }
            if !failed.is_empty() {
                return Err(Failure {
                    code: 3,
                    msg: format!("gradient check failed: {}", failed.join(", ")),
                });
            }
        }
        Command::Baseline { data, report, mirrored } => {
            let cities = load_cities(&data)?;
            score(&NaiveAverage { in_frames: 12 }, &cities, mirrored, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
