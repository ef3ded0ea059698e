//! Synthetic cities for desk-scale training.
//!
//! Street skeleton: full-span horizontal and vertical corridors (so every
//! corridor meets every other one), short connectors hanging off them and,
//! on larger maps, one diagonal street. Intensity grows with corridor width.
//!
//! Traffic: every street carries two opposite headings. Volume per pixel is
//! `capacity * daily_profile(t) * day_scale * (1 + slow_fluctuation(t)) *
//! pixel_factor * (1 + noise)`; speed is `free_flow - 0.55 * volume` plus a
//! little noise, and zero wherever the quantized volume is zero. The daily
//! profile peaks at 08:00 and 18:00, one heading favouring each peak.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::{CityDataset, DayMovie};
use super::movie::{TrafficMovie, FRAMES_PER_DAY, FRAME_MINUTES};
use super::DataError;
use crate::graph::StreetMap;

pub const MIN_EXTENT: usize = 6;

// Heading slots of the channel layout.
const NE: usize = 0;
const SE: usize = 1;
const SW: usize = 2;
const NW: usize = 3;

struct Street {
    cells: Vec<(usize, usize)>,
    headings: [usize; 2],
    width: usize,
    capacity_scale: f64,
}

fn gaussian(x: f64, mu: f64, sigma: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp()
}

fn daily_profile(hour: f64, am: f64, pm: f64, weekend: bool) -> f64 {
    let (peak, midday) = if weekend { (0.35, 1.3) } else { (1.0, 1.0) };
    0.05 + peak * am * gaussian(hour, 8.0, 1.0) + peak * pm * gaussian(hour, 18.0, 1.2) + midday * 0.3 * gaussian(hour, 13.0, 2.5)
}

fn pick_lines(rng: &mut ChaCha8Rng, extent: usize, count: usize, max_width: usize) -> Vec<(usize, usize)> {
    let mut lines: Vec<(usize, usize)> = Vec::new();
    let mut attempts = 0;
    while lines.len() < count && attempts < 200 {
        attempts += 1;
        let width = rng.random_range(1..=max_width);
        let pos = rng.random_range(1..extent.saturating_sub(width).max(2));
        let clear = lines
            .iter()
            .all(|&(p, w)| pos + width + 2 <= p || p + w + 2 <= pos);
        if clear && pos + width <= extent {
            lines.push((pos, width));
        }
    }
    if lines.is_empty() {
        lines.push((extent / 2, 1));
    }
    lines.sort_unstable();
    lines
}

fn layout(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Vec<Street> {
    let max_w = if height.min(width) >= 16 { 2 } else { 1 };
    let rows = pick_lines(rng, height, 1 + height / 12, max_w);
    let cols = pick_lines(rng, width, 1 + width / 12, max_w);
    let mut streets = Vec::new();
    for &(r, w) in &rows {
        let cells = (r..r + w).flat_map(|rr| (0..width).map(move |c| (rr, c))).collect();
        streets.push(Street {
            cells,
            headings: [NE, SW],
            width: w,
            capacity_scale: 1.0,
        });
    }
    for &(c, w) in &cols {
        let cells = (0..height).flat_map(|r| (c..c + w).map(move |cc| (r, cc))).collect();
        streets.push(Street {
            cells,
            headings: [SE, NW],
            width: w,
            capacity_scale: 1.0,
        });
    }

    // Connectors start on a corridor pixel and run perpendicular to it.
    let connectors = (height * width / 256).max(1);
    for i in 0..connectors {
        let len = rng.random_range(2..=(height.min(width) / 3).max(2));
        if i % 2 == 0 {
            let (c, _) = cols[rng.random_range(0..cols.len())];
            let r = rng.random_range(0..height);
            let right = rng.random_bool(0.5);
            let cells = (0..=len)
                .map(|k| if right { c as isize + k as isize } else { c as isize - k as isize })
                .filter(|&cc| cc >= 0 && (cc as usize) < width)
                .map(|cc| (r, cc as usize))
                .collect();
            streets.push(Street {
                cells,
                headings: [NE, SW],
                width: 1,
                capacity_scale: 0.6,
            });
        } else {
            let (r, _) = rows[rng.random_range(0..rows.len())];
            let c = rng.random_range(0..width);
            let down = rng.random_bool(0.5);
            let cells = (0..=len)
                .map(|k| if down { r as isize + k as isize } else { r as isize - k as isize })
                .filter(|&rr| rr >= 0 && (rr as usize) < height)
                .map(|rr| (rr as usize, c))
                .collect();
            streets.push(Street {
                cells,
                headings: [SE, NW],
                width: 1,
                capacity_scale: 0.6,
            });
        }
    }

    if height >= 12 && width >= 12 {
        let (r0, _) = rows[rng.random_range(0..rows.len())];
        let c0 = rng.random_range(0..width / 2);
        let len = (height / 2).min(r0).min(width - 1 - c0);
        if len >= 2 {
            let cells = (0..=len).map(|i| (r0 - i, c0 + i)).collect();
            streets.push(Street {
                cells,
                headings: [NE, SW],
                width: 1,
                capacity_scale: 0.8,
            });
        }
    }
    streets
}

/// Deterministic synthetic city of `days` full days (288 frames each).
pub fn synth_city(seed: u64, height: usize, width: usize, days: usize) -> Result<CityDataset, DataError> {
    if height < MIN_EXTENT || width < MIN_EXTENT {
        return Err(DataError::invalid(format!(
            "synthetic cities need at least {MIN_EXTENT}x{MIN_EXTENT} pixels, got {height}x{width}"
        )));
    }
    if days == 0 {
        return Err(DataError::invalid("synthetic cities need at least one day"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let streets = layout(&mut rng, height, width);

    let mut pixels = vec![0u8; height * width];
    for s in &streets {
        let intensity = (100 * s.width).min(255) as u8;
        for &(r, c) in &s.cells {
            let p = &mut pixels[r * width + c];
            *p = (*p).max(intensity);
        }
    }
    let street_map = StreetMap::new(height, width, pixels).expect("sized raster");

    // Static per-street, per-heading parameters.
    struct Flow {
        street: usize,
        heading: usize,
        capacity: f64,
        free_speed: f64,
        am: f64,
        pm: f64,
        pixel_factor: Vec<f64>,
    }
    let mut flows = Vec::new();
    for (si, s) in streets.iter().enumerate() {
        for (k, &heading) in s.headings.iter().enumerate() {
            let (am, pm) = if k == 0 { (1.0, 0.55) } else { (0.55, 1.0) };
            flows.push(Flow {
                street: si,
                heading,
                capacity: (70.0 + 45.0 * s.width as f64) * s.capacity_scale,
                free_speed: 120.0 + 50.0 * s.width as f64,
                am: am + rng.random_range(-0.15..0.15),
                pm: pm + rng.random_range(-0.15..0.15),
                pixel_factor: s.cells.iter().map(|_| rng.random_range(0.85..1.15)).collect(),
            });
        }
    }

    let mut day_movies = Vec::with_capacity(days);
    for day in 0..days {
        let weekday = (day % 7) as u8;
        let weekend = weekday >= 5;
        let mut movie = TrafficMovie::zeros(FRAMES_PER_DAY, height, width);
        let day_scale: Vec<f64> = flows
            .iter()
            .map(|_| 1.0 + 0.06 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut slow = vec![0.0f64; flows.len()];
        for t in 0..FRAMES_PER_DAY {
            let hour = (t * FRAME_MINUTES) as f64 / 60.0;
            for (fi, f) in flows.iter().enumerate() {
                slow[fi] = 0.92 * slow[fi] + 0.025 * rng.sample::<f64, _>(StandardNormal);
                let level = f.capacity * daily_profile(hour, f.am, f.pm, weekend) * day_scale[fi] * (1.0 + slow[fi]);
                for (&(r, c), &pf) in streets[f.street].cells.iter().zip(&f.pixel_factor) {
                    let noise = 1.0 + 0.04 * rng.sample::<f64, _>(StandardNormal);
                    let vol = (level * pf * noise).round().clamp(0.0, 255.0);
                    let spd = if vol > 0.0 {
                        (f.free_speed - 0.55 * vol + 3.0 * rng.sample::<f64, _>(StandardNormal))
                            .round()
                            .clamp(5.0, 255.0)
                    } else {
                        0.0
                    };
                    let px = movie.pixel_mut(t, r, c);
                    let (vi, si) = (2 * f.heading, 2 * f.heading + 1);
                    if px[vi] > 0 {
                        px[vi] = px[vi].saturating_add(vol as u8);
                        px[si] = px[si].min(spd as u8).max(1);
                    } else {
                        px[vi] = vol as u8;
                        px[si] = spd as u8;
                    }
                }
            }
        }
        day_movies.push(DayMovie {
            day_index: day,
            weekday,
            movie,
        });
    }
    CityDataset::new(format!("synth-{seed}"), street_map, day_movies)
}
