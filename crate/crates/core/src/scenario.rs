//! Disaster-region network geometry.
//!
//! A [`Scenario`] fixes victim and rescuer positions plus each victim's
//! transmit power. Positions never change after construction; every Monte
//! Carlo trial re-draws only the measurement noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{collinear, distance, Point, Rect};
use crate::rng::NoiseStream;

/// Minimum pairwise node separation, equal to the path-loss reference
/// distance so log-distance path loss is never evaluated below it.
pub const MIN_SEPARATION_M: f64 = 1.0;
/// Rejection-sampling budget per node.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
pub const TX_POWER_MIN_DBM: f64 = -10.0;
pub const TX_POWER_MAX_DBM: f64 = 10.0;
/// Minimum number of rescuers for non-cooperative solvability.
pub const MIN_RESCUERS: usize = 3;
/// Angular tolerance (radians) for the collinear-rescuer warning.
pub const COLLINEAR_TOL_RAD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    victims: Vec<Point>,
    rescuers: Vec<Point>,
    tx_power_dbm: Vec<f64>,
    bounds: Rect,
    seed: u64,
}

impl Scenario {
    /// Assemble a scenario from explicit parts. No invariant is enforced
    /// here; use [`validate_scenario`] to check one.
    pub fn from_parts(
        victims: Vec<Point>,
        rescuers: Vec<Point>,
        tx_power_dbm: Vec<f64>,
        bounds: Rect,
        seed: u64,
    ) -> Self {
        Self {
            victims,
            rescuers,
            tx_power_dbm,
            bounds,
            seed,
        }
    }

    pub fn victims(&self) -> &[Point] {
        &self.victims
    }

    pub fn rescuers(&self) -> &[Point] {
        &self.rescuers
    }

    pub fn tx_power_dbm(&self) -> &[f64] {
        &self.tx_power_dbm
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_victims(&self) -> usize {
        self.victims.len()
    }

    pub fn n_rescuers(&self) -> usize {
        self.rescuers.len()
    }

    /// Same geometry with different transmit powers.
    pub fn with_tx_powers(&self, tx_power_dbm: Vec<f64>) -> Self {
        Self {
            tx_power_dbm,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Draws a scenario with the default minimum separation.
pub fn generate_scenario(
    n_victims: usize,
    n_rescuers: usize,
    bounds: Rect,
    seed: u64,
) -> Result<Scenario> {
    generate_scenario_with_separation(n_victims, n_rescuers, bounds, seed, MIN_SEPARATION_M)
}

/// Victims are drawn first, then rescuers, from one stream; then one
/// transmit power per victim. A point that lands closer than
/// `min_separation` to an accepted node is re-drawn on its own.
pub fn generate_scenario_with_separation(
    n_victims: usize,
    n_rescuers: usize,
    bounds: Rect,
    seed: u64,
    min_separation: f64,
) -> Result<Scenario> {
    if n_victims < 1 {
        return Err(Error::InvalidInput(
            "at least one victim is required".into(),
        ));
    }
    if n_rescuers < MIN_RESCUERS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_RESCUERS} rescuers are required, got {n_rescuers}"
        )));
    }
    if bounds.is_degenerate() {
        return Err(Error::InvalidInput("degenerate bounds".into()));
    }

    let mut stream = NoiseStream::scenario(seed);
    let mut placed: Vec<Point> = Vec::with_capacity(n_victims + n_rescuers);
    for index in 0..n_victims + n_rescuers {
        let mut accepted = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = Point::new(
                stream.uniform(bounds.x_min, bounds.x_max),
                stream.uniform(bounds.y_min, bounds.y_max),
            );
            if placed.iter().all(|q| distance(&p, q) >= min_separation) {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => placed.push(p),
            None => {
                return Err(Error::InfeasibleDensity {
                    index,
                    min_separation,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                })
            }
        }
    }
    let rescuers = placed.split_off(n_victims);
    let tx_power_dbm = (0..n_victims)
        .map(|_| stream.uniform(TX_POWER_MIN_DBM, TX_POWER_MAX_DBM))
        .collect();

    Ok(Scenario {
        victims: placed,
        rescuers,
        tx_power_dbm,
        bounds,
        seed,
    })
}

/// Draws a fresh set of transmit powers, one per victim.
pub fn draw_tx_powers(n_victims: usize, stream: &mut NoiseStream) -> Vec<f64> {
    (0..n_victims)
        .map(|_| stream.uniform(TX_POWER_MIN_DBM, TX_POWER_MAX_DBM))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Victim,
    Rescuer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DegenerateBounds,
    NonFinitePosition {
        role: NodeRole,
        index: usize,
    },
    OutOfBounds {
        role: NodeRole,
        index: usize,
        point: Point,
    },
    PowerCountMismatch {
        victims: usize,
        powers: usize,
    },
    PowerOutOfRange {
        index: usize,
        dbm: f64,
    },
    NoVictims,
    TooFewRescuers {
        count: usize,
    },
    TooClose {
        a: (NodeRole, usize),
        b: (NodeRole, usize),
        distance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    CollinearRescuers,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty() && self.warnings.is_empty()
    }

    pub fn has_collinear_rescuers(&self) -> bool {
        self.warnings.contains(&Warning::CollinearRescuers)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_pass() {
            return write!(f, "pass");
        }
        for v in &self.violations {
            writeln!(f, "violation: {}", describe_violation(v))?;
        }
        for w in &self.warnings {
            match w {
                Warning::CollinearRescuers => writeln!(f, "warning: collinear rescuers")?,
            }
        }
        Ok(())
    }
}

fn describe_violation(v: &Violation) -> String {
    match v {
        Violation::DegenerateBounds => "degenerate bounds".into(),
        Violation::NonFinitePosition { role, index } => {
            format!("non-finite position for {role:?} {index}")
        }
        Violation::OutOfBounds { role, index, point } => {
            format!(
                "{role:?} {index} at ({}, {}) is out of bounds",
                point.x, point.y
            )
        }
        Violation::PowerCountMismatch { victims, powers } => {
            format!("{powers} transmit powers for {victims} victims")
        }
        Violation::PowerOutOfRange { index, dbm } => {
            format!("victim {index} transmit power {dbm} dBm outside [-10, 10]")
        }
        Violation::NoVictims => "no victims".into(),
        Violation::TooFewRescuers { count } => {
            format!("{count} rescuers, at least {MIN_RESCUERS} required")
        }
        Violation::TooClose { a, b, distance } => format!(
            "{:?} {} and {:?} {} are {distance} m apart (< {MIN_SEPARATION_M} m)",
            a.0, a.1, b.0, b.1
        ),
    }
}

/// Checks every scenario invariant and reports instead of failing.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    if s.bounds.is_degenerate() {
        report.violations.push(Violation::DegenerateBounds);
    }
    if s.victims.is_empty() {
        report.violations.push(Violation::NoVictims);
    }
    if s.rescuers.len() < MIN_RESCUERS {
        report.violations.push(Violation::TooFewRescuers {
            count: s.rescuers.len(),
        });
    }
    if s.tx_power_dbm.len() != s.victims.len() {
        report.violations.push(Violation::PowerCountMismatch {
            victims: s.victims.len(),
            powers: s.tx_power_dbm.len(),
        });
    }
    for (index, &dbm) in s.tx_power_dbm.iter().enumerate() {
        if !(TX_POWER_MIN_DBM..=TX_POWER_MAX_DBM).contains(&dbm) {
            report
                .violations
                .push(Violation::PowerOutOfRange { index, dbm });
        }
    }

    let nodes: Vec<((NodeRole, usize), Point)> = s
        .victims
        .iter()
        .enumerate()
        .map(|(i, p)| ((NodeRole::Victim, i), *p))
        .chain(
            s.rescuers
                .iter()
                .enumerate()
                .map(|(i, p)| ((NodeRole::Rescuer, i), *p)),
        )
        .collect();
    for &((role, index), p) in &nodes {
        if !p.is_finite() {
            report
                .violations
                .push(Violation::NonFinitePosition { role, index });
        } else if !s.bounds.contains(&p) {
            report.violations.push(Violation::OutOfBounds {
                role,
                index,
                point: p,
            });
        }
    }
    for (i, (a, p)) in nodes.iter().enumerate() {
        for (b, q) in &nodes[i + 1..] {
            let d = distance(p, q);
            if d < MIN_SEPARATION_M {
                report.violations.push(Violation::TooClose {
                    a: *a,
                    b: *b,
                    distance: d,
                });
            }
        }
    }

    if s.rescuers.len() >= MIN_RESCUERS && collinear(&s.rescuers, COLLINEAR_TOL_RAD) {
        report.warnings.push(Warning::CollinearRescuers);
    }
    report
}
