//! Service definitions, instance requests, and reproducible synthetic
//! traces.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::topology::InstanceId;

/// Identifier of a service. Id 0 is reserved for the synthetic Idle
/// service used by the predictor's token encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ServiceId(pub u32);

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

pub const IDLE_SERVICE: ServiceId = ServiceId(0);

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadError {
    ReservedServiceId,
    DuplicateServiceId(ServiceId),
    InvalidFraction { service: ServiceId, field: &'static str },
    SensitivityNotContractive { service: ServiceId, sum: f64 },
    InvalidHtRange { service: ServiceId },
    NonPositiveRpsRef(ServiceId),
    UnknownService(ServiceId),
    EmptyServiceMix,
    ZeroInstanceCount(ServiceId),
    NonPositiveElapsed,
    NegativeCpuTime,
    ZeroRequestedHt,
    UtilizationAboveOne { utilization: f64 },
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ReservedServiceId => write!(f, "service id 0 is reserved for Idle"),
            Self::DuplicateServiceId(s) => write!(f, "duplicate service id {s}"),
            Self::InvalidFraction { service, field } => {
                write!(f, "service {service}: {field} must lie in [0,1]")
            }
            Self::SensitivityNotContractive { service, sum } => write!(
                f,
                "service {service}: sc_sensitivity + ss_sensitivity = {sum} must be < 1"
            ),
            Self::InvalidHtRange { service } => {
                write!(f, "service {service}: ht_demand_range must satisfy 1 <= min <= max")
            }
            Self::NonPositiveRpsRef(s) => write!(f, "service {s}: rps_ref must be > 0"),
            Self::UnknownService(s) => write!(f, "unknown service {s}"),
            Self::EmptyServiceMix => write!(f, "trace generation needs at least one service"),
            Self::ZeroInstanceCount(s) => {
                write!(f, "service {s}: instance count must be >= 1")
            }
            Self::NonPositiveElapsed => write!(f, "elapsed time must be > 0"),
            Self::NegativeCpuTime => write!(f, "cpu_time must be >= 0"),
            Self::ZeroRequestedHt => write!(f, "requested_ht must be >= 1"),
            Self::UtilizationAboveOne { utilization } => {
                write!(f, "utilization {utilization} exceeds 1: inconsistent accounting")
            }
        }
    }
}

impl core::error::Error for WorkloadError {}

/// Per-service workload parameters.
///
/// `base_util` is the isolated per-HT utilization at the reference
/// request rate `rps_ref`. The sensitivities are the linear coupling
/// coefficients toward sharing-core and sharing-socket neighbors;
/// their sum must stay below 1 so the contention fixed point contracts.
/// `pressure` inflates the service's effective demand.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ServiceSpec {
    pub service_id: ServiceId,
    pub name: String,
    pub base_util: f64,
    pub rps_ref: f64,
    pub sc_sensitivity: f64,
    pub ss_sensitivity: f64,
    pub pressure: f64,
    pub ht_demand_range: (u32, u32),
}

impl ServiceSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.service_id == IDLE_SERVICE {
            return Err(WorkloadError::ReservedServiceId);
        }
        for (value, field) in [
            (self.base_util, "base_util"),
            (self.pressure, "pressure"),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(WorkloadError::InvalidFraction { service: self.service_id, field });
            }
        }
        if self.sc_sensitivity < 0.0 || self.ss_sensitivity < 0.0 {
            return Err(WorkloadError::InvalidFraction {
                service: self.service_id,
                field: "sensitivity",
            });
        }
        let sum = self.sc_sensitivity + self.ss_sensitivity;
        if !(sum < 1.0) {
            return Err(WorkloadError::SensitivityNotContractive { service: self.service_id, sum });
        }
        if self.rps_ref <= 0.0 || !self.rps_ref.is_finite() {
            return Err(WorkloadError::NonPositiveRpsRef(self.service_id));
        }
        let (lo, hi) = self.ht_demand_range;
        if lo < 1 || hi < lo {
            return Err(WorkloadError::InvalidHtRange { service: self.service_id });
        }
        Ok(())
    }
}

/// Validated set of services, indexed by id.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ServiceCatalog {
    services: Vec<ServiceSpec>,
}

impl ServiceCatalog {
    pub fn new(mut services: Vec<ServiceSpec>) -> Result<Self, WorkloadError> {
        services.sort_by_key(|s| s.service_id);
        for (i, s) in services.iter().enumerate() {
            s.validate()?;
            if i > 0 && services[i - 1].service_id == s.service_id {
                return Err(WorkloadError::DuplicateServiceId(s.service_id));
            }
        }
        Ok(Self { services })
    }

    pub fn services(&self) -> &[ServiceSpec] {
        &self.services
    }

    pub fn get(&self, id: ServiceId) -> Result<&ServiceSpec, WorkloadError> {
        self.services
            .binary_search_by_key(&id, |s| s.service_id)
            .map(|i| &self.services[i])
            .map_err(|_| WorkloadError::UnknownService(id))
    }

    /// Sorted service ids; the predictor's service vocabulary.
    pub fn ids(&self) -> Vec<ServiceId> {
        self.services.iter().map(|s| s.service_id).collect()
    }
}

/// One placement request.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceRequest {
    pub instance_id: InstanceId,
    pub service_id: ServiceId,
    pub requested_ht: u32,
    pub rps: f64,
}

/// Arrival or departure of an instance. Generated traces contain only
/// arrivals; the format carries departures for externally-authored
/// traces.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TraceEvent {
    Arrival(InstanceRequest),
    Departure { instance_id: InstanceId },
}

/// How per-instance request rates are drawn, as a ratio of the
/// service's `rps_ref`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum RpsModel {
    Fixed { ratio: f64 },
    UniformRatio { lo: f64, hi: f64 },
}

/// Generator configuration: the service mix with per-service instance
/// counts and the request-rate distribution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceGenConfig {
    pub counts: Vec<(ServiceId, u32)>,
    pub rps_model: RpsModel,
    /// Interleave arrivals across services instead of emitting them
    /// grouped by service.
    pub shuffle: bool,
}

impl TraceGenConfig {
    pub fn total_instances(&self) -> u64 {
        self.counts.iter().map(|&(_, n)| n as u64).sum()
    }
}

/// An ordered arrival sequence plus the provenance needed to regenerate
/// it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trace {
    pub seed: u64,
    pub config: TraceGenConfig,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn arrivals(&self) -> impl Iterator<Item = &InstanceRequest> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Arrival(r) => Some(r),
            TraceEvent::Departure { .. } => None,
        })
    }
}

/// Utilization of an instance over a window: CPU time consumed divided
/// by the capacity of its requested HTs over the elapsed time.
pub fn cpu_utilization(
    cpu_time: f64,
    requested_ht: u32,
    elapsed: f64,
) -> Result<f64, WorkloadError> {
    if requested_ht == 0 {
        return Err(WorkloadError::ZeroRequestedHt);
    }
    if elapsed <= 0.0 || !elapsed.is_finite() {
        return Err(WorkloadError::NonPositiveElapsed);
    }
    if cpu_time < 0.0 || !cpu_time.is_finite() {
        return Err(WorkloadError::NegativeCpuTime);
    }
    let utilization = cpu_time / (requested_ht as f64 * elapsed);
    const EPS: f64 = 1e-9;
    if utilization > 1.0 + EPS {
        return Err(WorkloadError::UtilizationAboveOne { utilization });
    }
    Ok(utilization.min(1.0))
}

/// Deterministically generates a trace: identical `(config, seed)`
/// always yields an identical event sequence.
pub fn generate_trace(
    catalog: &ServiceCatalog,
    config: &TraceGenConfig,
    seed: u64,
) -> Result<Trace, WorkloadError> {
    if config.counts.is_empty() {
        return Err(WorkloadError::EmptyServiceMix);
    }
    for &(service_id, count) in &config.counts {
        catalog.get(service_id)?;
        if count == 0 {
            return Err(WorkloadError::ZeroInstanceCount(service_id));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<ServiceId> = Vec::with_capacity(config.total_instances() as usize);
    for &(service_id, count) in &config.counts {
        for _ in 0..count {
            order.push(service_id);
        }
    }
    if config.shuffle {
        // Fisher-Yates with the seeded stream.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
    }
    let mut events = Vec::with_capacity(order.len());
    for (i, service_id) in order.into_iter().enumerate() {
        let spec = catalog.get(service_id)?;
        let (lo, hi) = spec.ht_demand_range;
        let requested_ht = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        let ratio = match config.rps_model {
            RpsModel::Fixed { ratio } => ratio,
            RpsModel::UniformRatio { lo, hi } => rng.gen_range(lo..hi),
        };
        events.push(TraceEvent::Arrival(InstanceRequest {
            instance_id: InstanceId(i as u64),
            service_id,
            requested_ht,
            rps: ratio * spec.rps_ref,
        }));
    }
    Ok(Trace { seed, config: config.clone(), events })
}

/// Splits `total` instances across `ids` with Zipf weights `1 / rank^s`,
/// using largest-remainder rounding so the counts sum exactly to
/// `total`. Deterministic; no sampling involved.
pub fn zipf_counts(ids: &[ServiceId], total: u32, exponent: f64) -> Vec<(ServiceId, u32)> {
    assert!(!ids.is_empty());
    let weights: Vec<f64> = (1..=ids.len())
        .map(|rank| {
            let mut w = 1.0;
            let mut e = exponent;
            // rank^-s via exp/ln would drag in libm for no_std; integer
            // ranks and small catalogs make repeated division fine.
            let r = rank as f64;
            while e >= 1.0 {
                w /= r;
                e -= 1.0;
            }
            if e > 0.0 {
                w /= powf_frac(r, e);
            }
            w
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u32> = raw.iter().map(|&x| x as u32).collect();
    let assigned: u32 = counts.iter().sum();
    // Hand the remainder to the largest fractional parts, ties by rank.
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - counts[a] as f64;
        let fb = raw[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..(total - assigned) as usize {
        counts[order[k % order.len()]] += 1;
    }
    ids.iter().copied().zip(counts).collect()
}

fn powf_frac(base: f64, frac: f64) -> f64 {
    // Square-root bisection of the exponent; only used for fractional
    // Zipf exponents, where coarse accuracy is acceptable.
    let mut result = 1.0;
    let mut b = crate::mathf::sqrt(base);
    let mut f = frac;
    for _ in 0..32 {
        if f >= 0.5 {
            result *= b;
            f -= 0.5;
        }
        b = crate::mathf::sqrt(b);
        f *= 2.0;
        if f == 0.0 {
            break;
        }
    }
    result
}

/// Per-instance workload attributes kept by the episode driver.
pub type InstanceInfoMap = BTreeMap<InstanceId, InstanceInfo>;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceInfo {
    pub service_id: ServiceId,
    pub requested_ht: u32,
    pub rps: f64,
}
