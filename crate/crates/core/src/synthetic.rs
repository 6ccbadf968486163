//! Seeded synthetic run-to-failure fleets in the C-MAPSS layout.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cmapss::{CycleRecord, EngineTrajectory, SubsetData, NUM_SENSORS, NUM_SETTINGS};
use crate::error::{Error, Result};

/// Sensors that carry the degradation signal, filled in this order.
const INFORMATIVE_ORDER: [usize; NUM_SENSORS] =
    [1, 2, 3, 6, 10, 11, 7, 12, 14, 16, 19, 20, 8, 13, 0, 4, 5, 9, 15, 17, 18];

/// Operating points used for six-regime fleets.
pub const SIX_REGIME_CENTERS: [[f64; NUM_SETTINGS]; 6] = [
    [0.0, 0.0, 100.0],
    [10.0, 0.25, 100.0],
    [20.0, 0.7, 100.0],
    [25.0, 0.62, 60.0],
    [35.0, 0.84, 100.0],
    [42.0, 0.84, 100.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `base + amp · t/T`.
    Linear,
    /// `base + a · exp(b · t/T)`.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub train_units: usize,
    pub test_units: usize,
    pub min_lifetime: u32,
    pub max_lifetime: u32,
    /// One setting center per regime.
    pub regime_centers: Vec<[f64; NUM_SETTINGS]>,
    /// Standard deviation of the settings around their regime center.
    pub setting_jitter: f64,
    pub profile: Profile,
    pub noise_std: f64,
    pub informative_sensors: usize,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            train_units: 50,
            test_units: 20,
            min_lifetime: 120,
            max_lifetime: 220,
            regime_centers: vec![SIX_REGIME_CENTERS[0]],
            setting_jitter: 0.0,
            profile: Profile::Linear,
            noise_std: 0.1,
            informative_sensors: 3,
            seed: 7,
        }
    }
}

impl FleetSpec {
    pub fn with_six_regimes(mut self) -> Self {
        self.regime_centers = SIX_REGIME_CENTERS.to_vec();
        self
    }

    pub fn regimes(&self) -> usize {
        self.regime_centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_lifetime < 30 || self.min_lifetime > self.max_lifetime {
            return Err(Error::Config(format!(
                "lifetimes must satisfy 30 <= min <= max, got {}..{}",
                self.min_lifetime, self.max_lifetime
            )));
        }
        if self.informative_sensors > NUM_SENSORS {
            return Err(Error::Config(format!(
                "at most {NUM_SENSORS} informative sensors, got {}",
                self.informative_sensors
            )));
        }
        if self.regime_centers.is_empty() || self.train_units == 0 {
            return Err(Error::Config("a fleet needs at least one regime and one training unit".into()));
        }
        if !(self.noise_std >= 0.0 && self.setting_jitter >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn informative(&self) -> &[usize] {
        &INFORMATIVE_ORDER[..self.informative_sensors]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FleetSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Fleet-wide sensor coefficients, derived from the seed alone.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorModel {
    pub base: [f64; NUM_SENSORS],
    /// Linear amplitude or exponential scale `a`.
    pub amp: [f64; NUM_SENSORS],
    /// Exponential rate `b`.
    pub rate: [f64; NUM_SENSORS],
    /// Additive offset per regime and sensor.
    pub regime_offset: Vec<[f64; NUM_SENSORS]>,
}

impl SensorModel {
    pub fn new(spec: &FleetSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut draw = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let mut base = [0.0; NUM_SENSORS];
        let mut amp = [0.0; NUM_SENSORS];
        let mut rate = [0.0; NUM_SENSORS];
        for s in 0..NUM_SENSORS {
            base[s] = draw(-5.0, 5.0);
            let sign = if draw(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            amp[s] = sign * draw(1.0, 3.0);
            rate[s] = draw(2.0, 4.0);
        }
        let regime_offset = (0..spec.regimes())
            .map(|_| {
                let mut o = [0.0; NUM_SENSORS];
                for v in o.iter_mut() {
                    *v = draw(-10.0, 10.0);
                }
                o
            })
            .collect();
        SensorModel {
            base,
            amp,
            rate,
            regime_offset,
        }
    }

    /// Noise-free degradation of an informative sensor at life fraction
    /// `frac = t/T`, before any regime offset.
    pub fn degradation(&self, profile: Profile, sensor: usize, frac: f64) -> f64 {
        match profile {
            Profile::Linear => self.base[sensor] + self.amp[sensor] * frac,
            Profile::Exponential => {
                self.base[sensor] + 0.1 * self.amp[sensor] * (self.rate[sensor] * frac).exp()
            }
        }
    }
}

fn unit_rng(spec: &FleetSpec, unit: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::from(unit));
    rng
}

/// Full lifetime of a unit; the first draw of its stream.
pub fn lifetime(spec: &FleetSpec, unit: u32) -> Result<u32> {
    let total = (spec.train_units + spec.test_units) as u32;
    if unit == 0 || unit > total {
        return Err(Error::Contract(format!(
            "unit {unit} is not part of a fleet of {total} units"
        )));
    }
    Ok(unit_rng(spec, unit).random_range(spec.min_lifetime..=spec.max_lifetime))
}

/// Ground-truth `max(0, T − t)` for a generated unit.
pub fn oracle_rul(spec: &FleetSpec, unit: u32, t: u32) -> Result<u32> {
    Ok(lifetime(spec, unit)?.saturating_sub(t))
}

fn generate_unit(spec: &FleetSpec, model: &SensorModel, unit: u32, truncate: bool) -> Result<EngineTrajectory> {
    let mut rng = unit_rng(spec, unit);
    let t_end = rng.random_range(spec.min_lifetime..=spec.max_lifetime);
    let cut = if truncate {
        rng.random_range((t_end / 4).max(15)..t_end)
    } else {
        t_end
    };
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let jitter = Normal::new(0.0, spec.setting_jitter.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let informative = spec.informative();
    let records = (1..=cut)
        .map(|t| {
            let regime = rng.random_range(0..spec.regimes());
            let mut settings = spec.regime_centers[regime];
            if spec.setting_jitter > 0.0 {
                for s in settings.iter_mut() {
                    *s += jitter.sample(&mut rng);
                }
            }
            let frac = f64::from(t) / f64::from(t_end);
            let mut sensors = [0.0; NUM_SENSORS];
            for (s, v) in sensors.iter_mut().enumerate() {
                let offset = model.regime_offset[regime][s];
                let clean = if informative.contains(&s) {
                    model.degradation(spec.profile, s, frac) + offset
                } else {
                    model.base[s] + offset
                };
                // Even-numbered uninformative sensors stay constant.
                let noisy = informative.contains(&s) || s % 2 == 1;
                *v = if noisy && spec.noise_std > 0.0 {
                    clean + noise.sample(&mut rng)
                } else {
                    clean
                };
            }
            CycleRecord {
                cycle: t,
                settings,
                sensors,
            }
        })
        .collect();
    Ok(EngineTrajectory { unit, records })
}

/// Generates the training fleet (units `1..=n`) and the truncated test fleet
/// (units `n+1..=n+m`) with their terminal offsets `T − cut`.
pub fn generate_fleet(spec: &FleetSpec) -> Result<SubsetData> {
    spec.validate()?;
    let model = SensorModel::new(spec);
    let n = spec.train_units as u32;
    let m = spec.test_units as u32;
    let train = (1..=n)
        .map(|u| generate_unit(spec, &model, u, false))
        .collect::<Result<Vec<_>>>()?;
    let test = (n + 1..=n + m)
        .map(|u| generate_unit(spec, &model, u, true))
        .collect::<Result<Vec<_>>>()?;
    let test_rul = test
        .iter()
        .map(|u| oracle_rul(spec, u.unit, u.len() as u32))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsetData {
        train,
        test,
        test_rul,
    })
}
