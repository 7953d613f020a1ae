//! Constraint checks for circle packings and point dispersions.
//!
//! Margins are signed: a constraint holds when its margin is at least `-tol`.

use serde::{Deserialize, Serialize};
use std::fmt;

pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(x: f64, y: f64, r: f64) -> Self {
        Self { x, y, r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Count { expected: usize, got: usize },
    NonFinite { index: usize },
    NonPositiveRadius { index: usize, r: f64 },
    Width { width: f64 },
    Containment { index: usize, wall: Wall, margin: f64 },
    Overlap { i: usize, j: usize, distance: f64, required: f64, margin: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Count { expected, got } => write!(f, "expected {expected} items, got {got}"),
            Violation::NonFinite { index } => write!(f, "item {index} has a non-finite coordinate"),
            Violation::NonPositiveRadius { index, r } => write!(f, "circle {index} has radius {r}"),
            Violation::Width { width } => write!(f, "width {width} outside (0, 2)"),
            Violation::Containment { index, wall, margin } => {
                write!(f, "item {index} crosses the {wall:?} wall by {}", -margin)
            }
            Violation::Overlap { i, j, distance, required, margin } => write!(
                f,
                "circles {i} and {j} overlap: distance {distance}, required {required} (short by {})",
                -margin
            ),
        }
    }
}

/// Every violated constraint of a rejected placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: Vec<String> = self.violations.iter().take(5).map(|v| v.to_string()).collect();
        write!(f, "{}", shown.join("; "))?;
        if self.violations.len() > 5 {
            write!(f, "; and {} more", self.violations.len() - 5)?;
        }
        Ok(())
    }
}

impl std::error::Error for ViolationReport {}

fn finish<T>(violations: Vec<Violation>, value: T) -> Result<T, ViolationReport> {
    if violations.is_empty() {
        Ok(value)
    } else {
        Err(ViolationReport { violations })
    }
}

/// Wall margins of a circle (or point when `r = 0`) in `[0,w] x [0,h]`.
pub fn wall_margins(x: f64, y: f64, r: f64, w: f64, h: f64) -> [(Wall, f64); 4] {
    [(Wall::Left, x - r), (Wall::Right, w - x - r), (Wall::Bottom, y - r), (Wall::Top, h - y - r)]
}

fn check_circles(circles: &[Circle], n: usize, w: f64, h: f64, tol: f64) -> Vec<Violation> {
    let mut v = Vec::new();
    if circles.len() != n {
        v.push(Violation::Count { expected: n, got: circles.len() });
        return v;
    }
    for (index, c) in circles.iter().enumerate() {
        if !(c.x.is_finite() && c.y.is_finite() && c.r.is_finite()) {
            v.push(Violation::NonFinite { index });
            continue;
        }
        if c.r <= 0.0 {
            v.push(Violation::NonPositiveRadius { index, r: c.r });
        }
        for (wall, margin) in wall_margins(c.x, c.y, c.r, w, h) {
            if margin < -tol {
                v.push(Violation::Containment { index, wall, margin });
            }
        }
    }
    if v.iter().any(|x| matches!(x, Violation::NonFinite { .. })) {
        return v;
    }
    for i in 0..circles.len() {
        for j in i + 1..circles.len() {
            let (a, b) = (circles[i], circles[j]);
            let distance = (a.x - b.x).hypot(a.y - b.y);
            let required = a.r + b.r;
            let margin = distance - required;
            if margin < -tol {
                v.push(Violation::Overlap { i, j, distance, required, margin });
            }
        }
    }
    v
}

/// Sum of radii of `n` disjoint circles inside the unit square.
pub fn verify_square_packing(circles: &[Circle], n: usize, tol: f64) -> Result<f64, ViolationReport> {
    let v = check_circles(circles, n, 1.0, 1.0, tol);
    finish(v, circles.iter().map(|c| c.r).sum())
}

/// Sum of radii of `n` disjoint circles inside `[0,w] x [0,2-w]`.
pub fn verify_rect_packing(
    circles: &[Circle],
    width: f64,
    n: usize,
    tol: f64,
) -> Result<f64, ViolationReport> {
    if !(width.is_finite() && width > 0.0 && width < 2.0) {
        return Err(ViolationReport { violations: vec![Violation::Width { width }] });
    }
    let v = check_circles(circles, n, width, 2.0 - width, tol);
    finish(v, circles.iter().map(|c| c.r).sum())
}

/// Ratio of the smallest to the largest pairwise distance.
///
/// Coincident points give 0. With `check_container`, every point must lie in
/// the unit square up to `tol`.
pub fn verify_minmax(
    points: &[(f64, f64)],
    n: usize,
    check_container: bool,
    tol: f64,
) -> Result<f64, ViolationReport> {
    let mut v = Vec::new();
    if points.len() != n {
        v.push(Violation::Count { expected: n, got: points.len() });
        return finish(v, 0.0);
    }
    for (index, &(x, y)) in points.iter().enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            v.push(Violation::NonFinite { index });
        } else if check_container {
            for (wall, margin) in wall_margins(x, y, 0.0, 1.0, 1.0) {
                if margin < -tol {
                    v.push(Violation::Containment { index, wall, margin });
                }
            }
        }
    }
    if !v.is_empty() {
        return finish(v, 0.0);
    }
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
    }
    // n < 2 or all points coincident
    if dmax == 0.0 || !dmin.is_finite() {
        return Ok(0.0);
    }
    Ok(dmin / dmax)
}
