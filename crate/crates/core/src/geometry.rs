use serde::{Deserialize, Serialize};

/// A planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

/// Euclidean distance in meters.
pub fn distance(p: &Point, q: &Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Square `[0, side] x [0, side]`.
    pub const fn square(side: f64) -> Self {
        Self::new(0.0, 0.0, side, side)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.width() > 0.0
            && self.height() > 0.0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Nearest point of the rectangle.
    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }

    /// Smallest rectangle holding every point, `None` when empty.
    pub fn bounding(points: &[Point]) -> Option<Rect> {
        let first = points.first()?;
        Some(
            points
                .iter()
                .fold(Rect::new(first.x, first.y, first.x, first.y), |r, p| {
                    Rect::new(
                        r.x_min.min(p.x),
                        r.y_min.min(p.y),
                        r.x_max.max(p.x),
                        r.y_max.max(p.y),
                    )
                }),
        )
    }

    /// Grown by `margin` on every side.
    pub fn expand(&self, margin: f64) -> Rect {
        Rect::new(
            self.x_min - margin,
            self.y_min - margin,
            self.x_max + margin,
            self.y_max + margin,
        )
    }
}

/// True when every point lies on one line, up to an angular tolerance in
/// radians. Fewer than three distinct points are always collinear.
pub fn collinear(points: &[Point], angle_tol: f64) -> bool {
    // Baseline through the two points farthest apart.
    let mut best = (0, 0, 0.0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = distance(&points[i], &points[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (i, j, span) = best;
    if span == 0.0 {
        return true;
    }
    let dir = points[j].sub(&points[i]);
    points.iter().all(|p| {
        let v = p.sub(&points[i]);
        let len = v.norm_sq().sqrt();
        if len <= span * 1e-12 {
            return true;
        }
        let sin = (dir.x * v.y - dir.y * v.x).abs() / (span * len);
        sin <= angle_tol.sin()
    })
}
