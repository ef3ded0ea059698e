use std::fs;
use std::path::Path;

use rand::Rng;

use super::movie::{TrafficMovie, FRAME_MINUTES};
use super::pgm::{read_street_map, write_pgm};
use super::DataError;
use crate::features::Timestamp;
use crate::graph::StreetMap;

/// Frames after the last seed frame that are predicted: 5, 10, 15, 30, 45
/// and 60 minutes ahead.
pub const HORIZON_OFFSETS: [usize; 6] = [1, 2, 3, 6, 9, 12];

/// Seed windows must start no later than 22:00.
pub const LATEST_START_MINUTE: usize = 22 * 60;

const STREET_FILE: &str = "streets.pgm";
const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayMovie {
    pub day_index: usize,
    /// 0 = Monday.
    pub weekday: u8,
    pub movie: TrafficMovie,
}

/// One city: a street raster plus one movie per recorded day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CityDataset {
    pub name: String,
    pub street_map: StreetMap,
    pub days: Vec<DayMovie>,
}

impl CityDataset {
    pub fn new(name: impl Into<String>, street_map: StreetMap, days: Vec<DayMovie>) -> Result<Self, DataError> {
        for d in &days {
            if d.movie.height() != street_map.height || d.movie.width() != street_map.width {
                return Err(DataError::invalid(format!(
                    "day {} movie is {}x{}, street map is {}x{}",
                    d.day_index,
                    d.movie.height(),
                    d.movie.width(),
                    street_map.height,
                    street_map.width
                )));
            }
            if d.weekday > 6 {
                return Err(DataError::invalid(format!("weekday {} out of range", d.weekday)));
            }
        }
        Ok(CityDataset {
            name: name.into(),
            street_map,
            days,
        })
    }

    pub fn height(&self) -> usize {
        self.street_map.height
    }

    pub fn width(&self) -> usize {
        self.street_map.width
    }

    /// The point-reflected city with heading channels swapped. Keeps the name.
    pub fn mirrored(&self) -> CityDataset {
        CityDataset {
            name: self.name.clone(),
            street_map: self.street_map.mirrored(),
            days: self
                .days
                .iter()
                .map(|d| DayMovie {
                    day_index: d.day_index,
                    weekday: d.weekday,
                    movie: d.movie.mirrored(),
                })
                .collect(),
        }
    }

    /// Writes `streets.pgm`, one `day_NNN.tmv` per day and `manifest.txt`.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        write_pgm(&dir.join(STREET_FILE), self.height(), self.width(), &self.street_map.pixels)?;
        let mut manifest = String::new();
        for d in &self.days {
            let file = format!("day_{:03}.tmv", d.day_index);
            d.movie.write(&dir.join(&file))?;
            manifest.push_str(&format!("{} {} {}\n", d.day_index, d.weekday, file));
        }
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, manifest).map_err(|e| DataError::io(&mpath, e))
    }

    /// Loads a dataset directory; the city name is the directory name.
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let street_map = read_street_map(&dir.join(STREET_FILE))?;
        let mpath = dir.join(MANIFEST_FILE);
        let manifest = fs::read_to_string(&mpath).map_err(|e| DataError::io(&mpath, e))?;
        let mut days = Vec::new();
        for (lineno, line) in manifest.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || DataError::invalid(format!("{}:{}: expected `day_index weekday path`", mpath.display(), lineno + 1));
            let [day, weekday, file] = parts[..] else {
                return Err(bad());
            };
            let day_index = day.parse().map_err(|_| bad())?;
            let weekday = weekday.parse().map_err(|_| bad())?;
            let movie = TrafficMovie::read(&dir.join(file))?;
            days.push(DayMovie {
                day_index,
                weekday,
                movie,
            });
        }
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "city".to_string());
        CityDataset::new(name, street_map, days)
    }
}

/// A seed sequence start inside one day's movie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedWindow {
    /// Position in [`CityDataset::days`].
    pub day: usize,
    pub start: usize,
    pub timestamp: Timestamp,
}

/// Last start frame whose seed and targets fit in the movie and whose wall
/// clock time is at most 22:00.
pub fn last_valid_start(frames: usize, in_frames: usize) -> Option<usize> {
    let horizon = in_frames + HORIZON_OFFSETS[HORIZON_OFFSETS.len() - 1];
    let by_length = frames.checked_sub(horizon)?;
    Some(by_length.min(LATEST_START_MINUTE / FRAME_MINUTES))
}

fn window(ds: &CityDataset, day: usize, start: usize) -> SeedWindow {
    let minute = (start * FRAME_MINUTES % (24 * 60)) as u32;
    SeedWindow {
        day,
        start,
        timestamp: Timestamp::new(minute, ds.days[day].weekday).expect("validated weekday"),
    }
}

/// Uniform day, then uniform valid start frame.
pub fn sample_seed_window<R: Rng + ?Sized>(ds: &CityDataset, rng: &mut R, in_frames: usize) -> Result<SeedWindow, DataError> {
    if ds.days.is_empty() {
        return Err(DataError::invalid(format!("city `{}` has no days", ds.name)));
    }
    let day = rng.random_range(0..ds.days.len());
    let last = last_valid_start(ds.days[day].movie.frames(), in_frames)
        .ok_or_else(|| DataError::invalid(format!("day {day} of `{}` is shorter than one window", ds.name)))?;
    let start = rng.random_range(0..=last);
    Ok(window(ds, day, start))
}

/// Every full hour from 00:00 to 22:00 on every day, in day order.
pub fn evaluation_windows(ds: &CityDataset, in_frames: usize) -> Vec<SeedWindow> {
    let per_hour = 60 / FRAME_MINUTES;
    let mut out = Vec::new();
    for (day, d) in ds.days.iter().enumerate() {
        let Some(last) = last_valid_start(d.movie.frames(), in_frames) else {
            continue;
        };
        out.extend((0..=22).map(|h| h * per_hour).filter(|&s| s <= last).map(|s| window(ds, day, s)));
    }
    out
}

/// Ground-truth frames `[6][H][W][8]` for a seed window starting at `start`.
pub fn target_frames(movie: &TrafficMovie, start: usize, in_frames: usize) -> Result<Vec<u8>, DataError> {
    let last_seed = start + in_frames - 1;
    let mut out = Vec::with_capacity(HORIZON_OFFSETS.len() * movie.frame(0).len());
    for off in HORIZON_OFFSETS {
        let t = last_seed + off;
        if t >= movie.frames() {
            return Err(DataError::invalid(format!(
                "target frame {t} beyond movie length {}",
                movie.frames()
            )));
        }
        out.extend_from_slice(movie.frame(t));
    }
    Ok(out)
}
