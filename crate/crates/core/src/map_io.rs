//! Text and image formats for worlds, belief maps, paths and traces.
//!
//! Grids are written with the top row (largest `y`) first, so a file reads
//! like the picture it describes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path as FsPath;

use crate::boundariness::BoundarinessMap;
use crate::error::{Error, Result};
use crate::geometry::{Cell, GridGeometry, Path, ViewPoint};
use crate::grid_map::{default_l_max, default_l_min, logistic, LogOddsMap};
use crate::info_gain::FuzzyFilter;
use crate::optimizer::TraceRow;
use crate::world_sim::WorldMap;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn row_major_from_top(rows: Vec<Vec<bool>>, width: usize) -> Vec<bool> {
    let height = rows.len();
    let mut cells = vec![false; width * height];
    for (r, row) in rows.into_iter().enumerate() {
        let j = height - 1 - r;
        cells[j * width..(j + 1) * width].copy_from_slice(&row);
    }
    cells
}

/// World from `#` (obstacle) and `.` (free) rows. Lines starting with `# `
/// are comments, as are blank lines.
pub fn parse_world_ascii(text: &str, resolution: f64) -> Result<WorldMap> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    let mut width = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with("# ") {
            continue;
        }
        let row: Vec<bool> = line
            .chars()
            .map(|ch| match ch {
                '#' => Ok(true),
                '.' => Ok(false),
                other => Err(parse_err(n + 1, format!("unexpected character {other:?}"))),
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    n + 1,
                    format!("row has {} cells, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    let width = width.ok_or_else(|| parse_err(0, "no grid rows"))?;
    let geometry = GridGeometry::new(width, rows.len(), resolution)?;
    WorldMap::new(geometry, row_major_from_top(rows, width))
}

pub fn world_to_ascii(world: &WorldMap) -> String {
    let g = world.geometry();
    let mut out = String::with_capacity((g.width + 1) * g.height);
    for j in (0..g.height).rev() {
        for i in 0..g.width {
            out.push(if world.is_occupied(Cell::new(i, j)) {
                '#'
            } else {
                '.'
            });
        }
        out.push('\n');
    }
    out
}

/// Grey-level image; `pixels` is row-major from `j = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    /// Binary (`P5`) encoding, top row first.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for j in (0..self.height).rev() {
            out.extend_from_slice(&self.pixels[j * self.width..(j + 1) * self.width]);
        }
        out
    }

    /// Reads `P2` or `P5` with maxval up to 255.
    pub fn decode(bytes: &[u8]) -> Result<Pgm> {
        let mut pos = 0;
        let token = |pos: &mut usize| -> Result<String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(parse_err(0, "truncated PGM header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = token(&mut pos)?;
        let num = |s: String| {
            s.parse::<usize>()
                .map_err(|_| parse_err(0, format!("bad PGM number {s:?}")))
        };
        let width = num(token(&mut pos)?)?;
        let height = num(token(&mut pos)?)?;
        let maxval = num(token(&mut pos)?)?;
        if maxval == 0 || maxval > 255 {
            return Err(parse_err(0, "only 8-bit PGM is supported"));
        }
        let scale = |v: usize| ((v * 255 + maxval / 2) / maxval) as u8;
        let mut top_first = Vec::with_capacity(width * height);
        match magic.as_str() {
            "P5" => {
                pos += 1;
                let data = bytes
                    .get(pos..pos + width * height)
                    .ok_or_else(|| parse_err(0, "truncated PGM data"))?;
                top_first.extend(data.iter().map(|b| scale(*b as usize)));
            }
            "P2" => {
                for _ in 0..width * height {
                    top_first.push(scale(num(token(&mut pos)?)?));
                }
            }
            other => return Err(parse_err(1, format!("unsupported PGM type {other:?}"))),
        }
        let mut pixels = vec![0; width * height];
        for r in 0..height {
            let j = height - 1 - r;
            pixels[j * width..(j + 1) * width]
                .copy_from_slice(&top_first[r * width..(r + 1) * width]);
        }
        Ok(Pgm {
            width,
            height,
            pixels,
        })
    }
}

/// World from an image: pixels darker than mid-grey are obstacles.
pub fn world_from_pgm(pgm: &Pgm, resolution: f64) -> Result<WorldMap> {
    let geometry = GridGeometry::new(pgm.width, pgm.height, resolution)?;
    WorldMap::new(geometry, pgm.pixels.iter().map(|p| *p < 128).collect())
}

/// Loads a world by extension: `.pgm` images, anything else as ASCII.
pub fn load_world(path: &FsPath, resolution: f64) -> Result<WorldMap> {
    let bytes = fs::read(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
    {
        world_from_pgm(&Pgm::decode(&bytes)?, resolution)
    } else {
        parse_world_ascii(&String::from_utf8_lossy(&bytes), resolution)
    }
}

/// Occupancy probability image: black is occupied, white is free.
pub fn probability_pgm(odds: &LogOddsMap) -> Pgm {
    let g = odds.geometry();
    Pgm {
        width: g.width,
        height: g.height,
        pixels: odds
            .values()
            .iter()
            .map(|l| ((1.0 - logistic(*l)) * 255.0).round() as u8)
            .collect(),
    }
}

/// Boundariness image: darker means more likely on the boundary.
pub fn boundariness_pgm(bd: &BoundarinessMap) -> Pgm {
    let g = bd.geometry();
    Pgm {
        width: g.width,
        height: g.height,
        pixels: bd
            .values()
            .iter()
            .map(|s| ((1.0 - s) * 255.0).round() as u8)
            .collect(),
    }
}

/// Log-odds grid as CSV: `# resolution` and `# bounds` lines, then one row per `j`, top
/// row first. Values round-trip exactly.
pub fn log_odds_to_csv(odds: &LogOddsMap) -> String {
    let g = odds.geometry();
    let (l_min, l_max) = odds.bounds();
    let mut out = format!(
        "# resolution {}\n# bounds {} {}\n",
        g.resolution, l_min, l_max
    );
    for j in (0..g.height).rev() {
        let row: Vec<String> = (0..g.width)
            .map(|i| format!("{}", odds.get(Cell::new(i, j))))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn log_odds_from_csv(text: &str) -> Result<LogOddsMap> {
    let mut resolution = None;
    let mut bounds = (default_l_min(), default_l_max());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            if parts.next() == Some("resolution") {
                let v = parts
                    .next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| parse_err(n + 1, "expected `# resolution <meters>`"))?;
                resolution = Some(v);
            } else if rest.trim_start().starts_with("bounds") {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .skip(1)
                    .filter_map(|s| s.parse().ok())
                    .collect();
                if v.len() != 2 {
                    return Err(parse_err(n + 1, "expected `# bounds <l_min> <l_max>`"));
                }
                bounds = (v[0], v[1]);
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(n + 1, format!("bad number {:?}", s.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    n + 1,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let resolution = resolution.ok_or_else(|| parse_err(1, "missing `# resolution` line"))?;
    let width = rows.first().map_or(0, |r| r.len());
    let height = rows.len();
    let geometry = GridGeometry::new(width, height, resolution)?;
    let mut values = vec![0.0; width * height];
    for (r, row) in rows.into_iter().enumerate() {
        let j = height - 1 - r;
        values[j * width..(j + 1) * width].copy_from_slice(&row);
    }
    LogOddsMap::from_values(geometry, values, bounds.0, bounds.1)
}

pub fn path_to_csv(path: &Path) -> String {
    let mut out = String::from("x,y,theta\n");
    for v in path.vertices() {
        let _ = writeln!(out, "{},{},{}", v.x, v.y, v.theta);
    }
    out
}

pub fn path_from_csv(text: &str) -> Result<Path> {
    let mut vertices = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(n + 1, format!("bad number {:?}", s.trim())))
            })
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(parse_err(n + 1, "expected `x,y,theta`"));
        }
        vertices.push(ViewPoint::new(v[0], v[1], v[2]));
    }
    Path::new(vertices).map_err(|_| parse_err(0, "path file has no vertices"))
}

pub fn filter_to_csv(filter: &FuzzyFilter, geometry: &GridGeometry) -> String {
    let mut out = String::from("i,j,discount\n");
    for (k, v) in filter.iter() {
        let c = geometry.cell_at(k);
        let _ = writeln!(out, "{},{},{}", c.i, c.j, v);
    }
    out
}

pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,f,smoothness,gain,accepted,rejected\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.value, r.smoothness, r.gain, r.accepted, r.rejected
        );
    }
    out
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &FsPath, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(FsPath::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::param("path", "output path has no file name"))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROOM: &str = "# small room\n#####\n#..##\n#...#\n#####\n";

    #[test]
    fn ascii_world_top_row_is_highest_y() {
        let w = parse_world_ascii(ROOM, 0.5).unwrap();
        assert_eq!(w.geometry().height, 4);
        assert!(w.is_occupied(Cell::new(3, 2)));
        assert!(!w.is_occupied(Cell::new(3, 1)));
        assert_eq!(
            world_to_ascii(&w),
            ROOM.trim_start_matches("# small room\n")
        );
    }

    #[test]
    fn ascii_errors_carry_line_numbers() {
        let err = parse_world_ascii("#####\n#.x.#\n#####\n", 0.3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_world_ascii("#####\n#..#\n", 0.3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn pgm_round_trip() {
        let pgm = Pgm {
            width: 3,
            height: 2,
            pixels: vec![0, 10, 20, 30, 40, 255],
        };
        assert_eq!(Pgm::decode(&pgm.encode()).unwrap(), pgm);
        let ascii = b"P2\n# c\n3 2\n255\n30 40 255\n0 10 20\n";
        assert_eq!(Pgm::decode(ascii).unwrap(), pgm);
    }

    #[test]
    fn log_odds_csv_round_trip_is_exact() {
        let g = GridGeometry::new(4, 3, 0.3).unwrap();
        let mut m = LogOddsMap::new(g);
        m.set(Cell::new(1, 2), -0.123456789012345);
        m.set(Cell::new(3, 0), 2.0 / 3.0);
        let back = log_odds_from_csv(&log_odds_to_csv(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn path_csv_round_trip() {
        let p = Path::new(vec![
            ViewPoint::new(0.1, 0.2, 0.3),
            ViewPoint::new(1.0 / 3.0, 2.0, -1.0),
        ])
        .unwrap();
        assert_eq!(path_from_csv(&path_to_csv(&p)).unwrap(), p);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = std::env::temp_dir().join(format!("diffexplore-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let f = dir.join("a.txt");
        write_atomic(&f, b"one").unwrap();
        write_atomic(&f, b"two").unwrap();
        assert_eq!(fs::read(&f).unwrap(), b"two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
