//! Link topology, channel parameters and measurement synthesis.
//!
//! Measurements are pure functions of the scenario, the link list and an
//! explicit [`NoiseStream`]. Links are processed in the order given and each
//! link consumes exactly one standard-normal draw.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point};
use crate::rng::NoiseStream;
use crate::scenario::Scenario;

/// Smallest range a ToA measurement may report.
pub const MIN_RANGE_M: f64 = 1e-3;

/// RSS readings are reported on a dyadic grid of 2^-36 dB. Sums and
/// differences of grid values are exact in `f64`, which makes transmit power
/// cancel bit-exactly in RSS differences.
pub const RSS_RESOLUTION_DB: f64 = 1.0 / (1u64 << 36) as f64;

pub fn quantize_db(value: f64) -> f64 {
    (value / RSS_RESOLUTION_DB).round() * RSS_RESOLUTION_DB
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub ple: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub sigma_shadow_db: f64,
    /// ToA ranging noise expressed as distance, m.
    pub sigma_range_m: f64,
    /// AoA bearing noise, rad.
    pub sigma_angle_rad: f64,
    /// Path loss at the reference distance, dB.
    pub ref_loss_db: f64,
    /// Reference distance, m.
    pub ref_dist_m: f64,
    /// Propagation speed, m/s.
    pub prop_speed_mps: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            ple: 3.0,
            sigma_shadow_db: 3.0,
            sigma_range_m: 0.3,
            sigma_angle_rad: 2f64.to_radians(),
            ref_loss_db: 40.0,
            ref_dist_m: 1.0,
            prop_speed_mps: 3.0e8,
        }
    }
}

impl ChannelParams {
    /// Default constants with every noise source switched off.
    pub fn noiseless() -> Self {
        Self {
            sigma_shadow_db: 0.0,
            sigma_range_m: 0.0,
            sigma_angle_rad: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("channel.{field}"), msg))
            }
        };
        check(self.ple.is_finite() && self.ple > 0.0, "ple", "must be > 0")?;
        check(
            self.sigma_shadow_db.is_finite() && self.sigma_shadow_db >= 0.0,
            "sigma_shadow_db",
            "must be >= 0",
        )?;
        check(
            self.sigma_range_m.is_finite() && self.sigma_range_m >= 0.0,
            "sigma_range_m",
            "must be >= 0",
        )?;
        check(
            self.sigma_angle_rad.is_finite() && self.sigma_angle_rad >= 0.0,
            "sigma_angle_deg",
            "must be >= 0",
        )?;
        check(
            self.ref_loss_db.is_finite(),
            "ref_loss_db",
            "must be finite",
        )?;
        check(
            self.ref_dist_m.is_finite() && self.ref_dist_m > 0.0,
            "ref_dist_m",
            "must be > 0",
        )?;
        check(
            self.prop_speed_mps.is_finite() && self.prop_speed_mps > 0.0,
            "prop_speed_mps",
            "must be > 0",
        )
    }

    /// Deterministic log-distance path loss `L0 + 10 ple log10(d / d0)`, dB.
    pub fn path_loss_db(&self, d: f64) -> f64 {
        self.ref_loss_db + 10.0 * self.ple * (d / self.ref_dist_m).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    VictimRescuer,
    VictimVictim,
}

/// A wireless link. `src` is always a victim; `dst` is a rescuer index for
/// [`LinkKind::VictimRescuer`] and a victim index otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub src: usize,
    pub dst: usize,
}

impl Link {
    pub const fn rescuer(victim: usize, rescuer: usize) -> Self {
        Self {
            kind: LinkKind::VictimRescuer,
            src: victim,
            dst: rescuer,
        }
    }

    pub const fn victims(a: usize, b: usize) -> Self {
        Self {
            kind: LinkKind::VictimVictim,
            src: a,
            dst: b,
        }
    }

    fn endpoints(&self, s: &Scenario) -> Result<(Point, Point)> {
        let src = s
            .victims()
            .get(self.src)
            .ok_or_else(|| Error::InvalidInput(format!("no victim {}", self.src)))?;
        let dst = match self.kind {
            LinkKind::VictimRescuer => s.rescuers().get(self.dst),
            LinkKind::VictimVictim => {
                if self.src == self.dst {
                    return Err(Error::InvalidInput(format!(
                        "victim link {} -> {} is a self-loop",
                        self.src, self.dst
                    )));
                }
                s.victims().get(self.dst)
            }
        }
        .ok_or_else(|| Error::InvalidInput(format!("no destination node {}", self.dst)))?;
        Ok((*src, *dst))
    }
}

/// Which links exist. Victim pairs are unordered and stored once with the
/// lower index as `src`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    reachable: Vec<Vec<usize>>,
    victim_pairs: Vec<(usize, usize)>,
}

impl Topology {
    /// Every victim hears every rescuer and every other victim.
    pub fn full(s: &Scenario) -> Self {
        Self::within_range(s, f64::INFINITY)
    }

    /// Links exist only between nodes at most `range` meters apart.
    pub fn within_range(s: &Scenario, range: f64) -> Self {
        let reachable = s
            .victims()
            .iter()
            .map(|v| {
                s.rescuers()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| distance(v, r) <= range)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let mut victim_pairs = Vec::new();
        for (i, a) in s.victims().iter().enumerate() {
            for (j, b) in s.victims().iter().enumerate().skip(i + 1) {
                if distance(a, b) <= range {
                    victim_pairs.push((i, j));
                }
            }
        }
        Self {
            reachable,
            victim_pairs,
        }
    }

    /// Explicit topology; rescuer lists are kept in the given order.
    pub fn from_parts(reachable: Vec<Vec<usize>>, victim_pairs: Vec<(usize, usize)>) -> Self {
        Self {
            reachable,
            victim_pairs,
        }
    }

    pub fn n_victims(&self) -> usize {
        self.reachable.len()
    }

    pub fn reachable(&self, victim: usize) -> &[usize] {
        &self.reachable[victim]
    }

    pub fn victim_pairs(&self) -> &[(usize, usize)] {
        &self.victim_pairs
    }

    pub fn rescuer_links(&self) -> Vec<Link> {
        self.reachable
            .iter()
            .enumerate()
            .flat_map(|(v, rs)| rs.iter().map(move |&r| Link::rescuer(v, r)))
            .collect()
    }

    pub fn victim_links(&self) -> Vec<Link> {
        self.victim_pairs
            .iter()
            .map(|&(a, b)| Link::victims(a, b))
            .collect()
    }

    /// Rescuer links first, then victim pairs.
    pub fn all_links(&self) -> Vec<Link> {
        let mut links = self.rescuer_links();
        links.extend(self.victim_links());
        links
    }

    /// Total link count touching each victim.
    pub fn degree(&self, victim: usize) -> usize {
        self.reachable[victim].len()
            + self
                .victim_pairs
                .iter()
                .filter(|&&(a, b)| a == victim || b == victim)
                .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Range, m.
    Toa,
    /// Range difference to the reference rescuer, m.
    Tdoa,
    /// Bearing from rescuer to victim, rad in `(-pi, pi]`.
    Aoa,
    /// Received power, dBm.
    Rss,
    /// Reference RSS minus RSS, dB.
    Rssd,
}

impl Modality {
    pub fn unit(&self) -> &'static str {
        match self {
            Modality::Toa | Modality::Tdoa => "m",
            Modality::Aoa => "rad",
            Modality::Rss => "dBm",
            Modality::Rssd => "dB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    #[serde(flatten)]
    pub link: Link,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub modality: Modality,
    pub entries: Vec<Entry>,
    /// Reference rescuer of a single-victim TDoA set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdoa_reference: Option<usize>,
    /// Reference rescuer per victim of an RSSD set.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rssd_reference: BTreeMap<usize, usize>,
}

impl MeasurementSet {
    pub fn new(modality: Modality, entries: Vec<Entry>) -> Self {
        Self {
            modality,
            entries,
            tdoa_reference: None,
            rssd_reference: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entries whose source is `victim`, on rescuer links only, keeping the
    /// per-victim reference index.
    pub fn for_victim(&self, victim: usize) -> MeasurementSet {
        let entries = self
            .entries
            .iter()
            .filter(|e| e.link.src == victim && e.link.kind == LinkKind::VictimRescuer)
            .copied()
            .collect();
        let mut out = MeasurementSet::new(self.modality, entries);
        out.tdoa_reference = self.tdoa_reference;
        if let Some(&r) = self.rssd_reference.get(&victim) {
            out.rssd_reference.insert(victim, r);
        }
        out
    }

    /// Victim ids appearing as a source, ascending.
    pub fn victims(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.entries.iter().map(|e| e.link.src).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Noisy ranges `d + N(0, sigma_range^2)`, clamped to [`MIN_RANGE_M`].
pub fn gen_toa_ranges(
    scenario: &Scenario,
    links: &[Link],
    params: &ChannelParams,
    stream: &mut NoiseStream,
) -> Result<MeasurementSet> {
    if links.is_empty() {
        return Err(Error::InvalidInput("no links to measure".into()));
    }
    let mut entries = Vec::with_capacity(links.len());
    for link in links {
        let (p, q) = link.endpoints(scenario)?;
        let noise = stream.gaussian(params.sigma_range_m);
        entries.push(Entry {
            link: *link,
            value: (distance(&p, &q) + noise).max(MIN_RANGE_M),
        });
    }
    Ok(MeasurementSet::new(Modality::Toa, entries))
}

/// Range differences for one victim against `rescuer_set[0]`.
///
/// Each rescuer gets its own noisy range (same transmit epoch, independent
/// receiver noise), drawn in `rescuer_set` order; entry `j` holds
/// `r_j - r_0` for `j >= 1`.
pub fn gen_tdoa(
    scenario: &Scenario,
    victim: usize,
    rescuer_set: &[usize],
    params: &ChannelParams,
    stream: &mut NoiseStream,
) -> Result<MeasurementSet> {
    if rescuer_set.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "TDoA needs at least 3 rescuers, got {}",
            rescuer_set.len()
        )));
    }
    let mut ranges = Vec::with_capacity(rescuer_set.len());
    for &r in rescuer_set {
        let (p, q) = Link::rescuer(victim, r).endpoints(scenario)?;
        ranges.push((distance(&p, &q) + stream.gaussian(params.sigma_range_m)).max(MIN_RANGE_M));
    }
    let entries = rescuer_set
        .iter()
        .zip(&ranges)
        .skip(1)
        .map(|(&r, &range)| Entry {
            link: Link::rescuer(victim, r),
            value: range - ranges[0],
        })
        .collect();
    let mut set = MeasurementSet::new(Modality::Tdoa, entries);
    set.tdoa_reference = Some(rescuer_set[0]);
    Ok(set)
}

/// Bearings measured at the rescuer, `atan2(v - r) + N(0, sigma_angle^2)`,
/// wrapped to `(-pi, pi]`. Victims carry no antenna array, so only rescuer
/// links are accepted.
pub fn gen_aoa(
    scenario: &Scenario,
    links: &[Link],
    params: &ChannelParams,
    stream: &mut NoiseStream,
) -> Result<MeasurementSet> {
    let mut entries = Vec::with_capacity(links.len());
    for link in links {
        if link.kind != LinkKind::VictimRescuer {
            return Err(Error::InvalidInput(
                "AoA is only measured on victim-to-rescuer links".into(),
            ));
        }
        let (v, r) = link.endpoints(scenario)?;
        let theta = (v.y - r.y).atan2(v.x - r.x) + stream.gaussian(params.sigma_angle_rad);
        entries.push(Entry {
            link: *link,
            value: wrap_angle(theta),
        });
    }
    Ok(MeasurementSet::new(Modality::Aoa, entries))
}

/// Log-normal shadowing RSS in dBm:
/// `P_t - L0 - 10 ple log10(d / d0) + N(0, sigma_shadow^2)`.
pub fn gen_rss(
    scenario: &Scenario,
    links: &[Link],
    params: &ChannelParams,
    stream: &mut NoiseStream,
) -> Result<MeasurementSet> {
    let mut entries = Vec::with_capacity(links.len());
    for link in links {
        let (p, q) = link.endpoints(scenario)?;
        let d = distance(&p, &q);
        if d < params.ref_dist_m {
            return Err(Error::InsideReferenceDistance {
                src: link.src,
                dst: link.dst,
                distance: d,
                ref_dist: params.ref_dist_m,
            });
        }
        let tx = *scenario.tx_power_dbm().get(link.src).ok_or_else(|| {
            Error::InvalidInput(format!("no transmit power for victim {}", link.src))
        })?;
        let channel = -params.path_loss_db(d) + stream.gaussian(params.sigma_shadow_db);
        entries.push(Entry {
            link: *link,
            value: quantize_db(tx) + quantize_db(channel),
        });
    }
    Ok(MeasurementSet::new(Modality::Rss, entries))
}

/// Per victim, differences against the strongest rescuer reading (first one
/// on ties): `D_j = P_ref - P_j >= 0` for every other rescuer. Victim-victim
/// entries are ignored.
pub fn derive_rssd(rss: &MeasurementSet) -> Result<MeasurementSet> {
    if rss.modality != Modality::Rss {
        return Err(Error::InvalidInput(format!(
            "expected an RSS set, got {:?}",
            rss.modality
        )));
    }
    let mut per_victim: BTreeMap<usize, Vec<Entry>> = BTreeMap::new();
    for e in rss
        .entries
        .iter()
        .filter(|e| e.link.kind == LinkKind::VictimRescuer)
    {
        per_victim.entry(e.link.src).or_default().push(*e);
    }
    let mut out = MeasurementSet::new(Modality::Rssd, Vec::new());
    for (victim, obs) in per_victim {
        if obs.len() < 2 {
            return Err(Error::InsufficientForDifferencing {
                victim,
                count: obs.len(),
            });
        }
        let mut best = 0;
        for (k, e) in obs.iter().enumerate() {
            if e.value > obs[best].value {
                best = k;
            }
        }
        let reference = obs[best];
        out.rssd_reference.insert(victim, reference.link.dst);
        for (k, e) in obs.iter().enumerate() {
            if k != best {
                out.entries.push(Entry {
                    link: e.link,
                    value: reference.value - e.value,
                });
            }
        }
    }
    Ok(out)
}
