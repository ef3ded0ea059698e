//! Hourly-window evaluation, optionally on mirrored cities, and the
//! generalization report comparing the two.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{evaluation_windows, target_frames, write_pgm, CityDataset, SeedWindow, CHANNELS, FRAME_MINUTES, HORIZON_OFFSETS};
use crate::error::{Error, Result};
use crate::model::{CityGraphs, Model};
use crate::train::{mse_metric, naive_average_predict};

/// Anything that maps a seed window to `[6, H, W, 8]` normalized frames.
pub trait Predictor: Sync {
    /// Per-city state built once, e.g. the graph hierarchy.
    type Context: Sync;

    fn in_frames(&self) -> usize;
    fn prepare(&self, city: &CityDataset) -> Result<Self::Context>;
    fn predict(&self, ctx: &Self::Context, city: &CityDataset, window: &SeedWindow) -> Result<Vec<f64>>;
}

impl Predictor for Model {
    type Context = CityGraphs;

    fn in_frames(&self) -> usize {
        self.config().in_frames
    }

    fn prepare(&self, city: &CityDataset) -> Result<CityGraphs> {
        self.city_graphs(&city.street_map)
    }

    fn predict(&self, ctx: &CityGraphs, city: &CityDataset, w: &SeedWindow) -> Result<Vec<f64>> {
        self.predict_frames(ctx, &city.days[w.day].movie, w.start, w.timestamp)
    }
}

/// Repeats the mean of the seed frames for every horizon.
#[derive(Debug, Clone, Copy)]
pub struct NaiveAverage {
    pub in_frames: usize,
}

impl Predictor for NaiveAverage {
    type Context = ();

    fn in_frames(&self) -> usize {
        self.in_frames
    }

    fn prepare(&self, _city: &CityDataset) -> Result<()> {
        Ok(())
    }

    fn predict(&self, _ctx: &(), city: &CityDataset, w: &SeedWindow) -> Result<Vec<f64>> {
        naive_average_predict(&city.days[w.day].movie, w.start, self.in_frames)
    }
}

#[derive(Debug, Clone)]
pub struct WindowScore {
    pub day: usize,
    pub hour: usize,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct CityEval {
    pub name: String,
    pub windows: Vec<WindowScore>,
}

impl CityEval {
    /// Pooled over every element of every window. All windows of a city
    /// have the same size, so this is the mean of the window scores.
    pub fn mse(&self) -> f64 {
        if self.windows.is_empty() {
            return f64::NAN;
        }
        self.windows.iter().map(|w| w.mse).sum::<f64>() / self.windows.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub mirrored: bool,
    /// Sorted by city name.
    pub cities: Vec<CityEval>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourStats {
    pub hour: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl EvalRun {
    /// Per-city MSE weighted by each city's window count.
    pub fn overall(&self) -> f64 {
        let n: usize = self.cities.iter().map(|c| c.windows.len()).sum();
        if n == 0 {
            return f64::NAN;
        }
        self.cities.iter().map(|c| c.mse() * c.windows.len() as f64).sum::<f64>() / n as f64
    }

    pub fn city(&self, name: &str) -> Option<&CityEval> {
        self.cities.iter().find(|c| c.name == name)
    }

    /// Window scores grouped by start hour across all cities and days.
    pub fn per_hour(&self) -> Vec<HourStats> {
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); 24];
        for c in &self.cities {
            for w in &c.windows {
                buckets[w.hour].push(w.mse);
            }
        }
        buckets
            .into_iter()
            .enumerate()
            .filter(|(_, b)| !b.is_empty())
            .map(|(hour, mut b)| {
                b.sort_by(f64::total_cmp);
                let n = b.len();
                let mean = b.iter().sum::<f64>() / n as f64;
                let median = if n % 2 == 1 { b[n / 2] } else { 0.5 * (b[n / 2 - 1] + b[n / 2]) };
                let var = b.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                HourStats {
                    hour,
                    count: n,
                    mean,
                    median,
                    std: var.sqrt(),
                }
            })
            .collect()
    }
}

fn evaluate_city<P: Predictor>(p: &P, city: &CityDataset) -> Result<CityEval> {
    let ctx = p.prepare(city)?;
    let windows = evaluation_windows(city, p.in_frames());
    let scores = windows
        .par_iter()
        .map(|w| {
            let pred = p.predict(&ctx, city, w)?;
            let target = target_frames(&city.days[w.day].movie, w.start, p.in_frames())?;
            Ok(WindowScore {
                day: w.day,
                hour: w.start * FRAME_MINUTES / 60,
                mse: mse_metric(&pred, &target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CityEval {
        name: city.name.clone(),
        windows: scores,
    })
}

/// Scores every hourly window of every city. With `mirrored`, each city and
/// its movies are reflected first while the predictor stays unchanged.
pub fn evaluate<P: Predictor>(p: &P, datasets: &[CityDataset], mirrored: bool) -> Result<EvalRun> {
    let mut cities = datasets
        .par_iter()
        .map(|d| {
            if mirrored {
                evaluate_city(p, &d.mirrored())
            } else {
                evaluate_city(p, d)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    cities.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(EvalRun { mirrored, cities })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityRow {
    pub name: String,
    pub windows: usize,
    pub mse: f64,
    pub mse_star: f64,
}

impl CityRow {
    pub fn rel(&self) -> f64 {
        self.mse / self.mse_star
    }
}

/// Side-by-side scores on the original and mirrored cities.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<CityRow>,
    pub overall_mse: f64,
    pub overall_mse_star: f64,
    pub per_hour: Vec<HourStats>,
}

impl EvalReport {
    /// Pairs two runs city by city. The second is normally the mirrored one.
    pub fn new(original: &EvalRun, mirrored: &EvalRun) -> Result<Self> {
        if original.cities.len() != mirrored.cities.len() {
            return Err(Error::Invalid("both runs must cover the same cities".into()));
        }
        let rows = original
            .cities
            .iter()
            .zip(&mirrored.cities)
            .map(|(a, b)| {
                if a.name != b.name {
                    return Err(Error::Invalid(format!("city `{}` paired with `{}`", a.name, b.name)));
                }
                Ok(CityRow {
                    name: a.name.clone(),
                    windows: a.windows.len(),
                    mse: a.mse(),
                    mse_star: b.mse(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            rows,
            overall_mse: original.overall(),
            overall_mse_star: mirrored.overall(),
            per_hour: original.per_hour(),
        })
    }

    pub fn overall_rel(&self) -> f64 {
        self.overall_mse / self.overall_mse_star
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("city,windows,mse,mse_star,rel_mse\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", r.name, r.windows, r.mse, r.mse_star, r.rel());
        }
        let n: usize = self.rows.iter().map(|r| r.windows).sum();
        let _ = writeln!(
            s,
            "overall,{n},{:.6},{:.6},{:.6}",
            self.overall_mse,
            self.overall_mse_star,
            self.overall_rel()
        );
        s
    }

    pub fn per_hour_csv(&self) -> String {
        let mut s = String::from("hour,windows,mean,median,std\n");
        for h in &self.per_hour {
            let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", h.hour, h.count, h.mean, h.median, h.std);
        }
        s
    }
}

/// Writes one PGM per horizon and channel, named `h{offset}_c{channel}.pgm`.
pub fn dump_frames(dir: &Path, frames: &[f64], height: usize, width: usize) -> Result<()> {
    let per = height * width * CHANNELS;
    if frames.len() != per * HORIZON_OFFSETS.len() {
        return Err(Error::Invalid(format!("expected {} values, got {}", per * HORIZON_OFFSETS.len(), frames.len())));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (h, off) in HORIZON_OFFSETS.iter().enumerate() {
        for c in 0..CHANNELS {
            let pixels: Vec<u8> = (0..height * width)
                .map(|p| (frames[h * per + p * CHANNELS + c] * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            write_pgm(&dir.join(format!("h{off}_c{c}.pgm")), height, width, &pixels)?;
        }
    }
    Ok(())
}
