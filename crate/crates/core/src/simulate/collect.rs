use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::StateBox;
use crate::error::{ensure_finite, Error, Result};
use crate::simulate::plant::Plant;

/// One snapshot `(t, x, u, ẋ)` where ẋ includes the process noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub xdot: DVector<f64>,
}

/// Sum of sinusoids applied identically (with independent phases) to every
/// input channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub amplitudes: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
}

impl Excitation {
    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.len() != self.frequencies_hz.len() || self.amplitudes.is_empty() {
            return Err(Error::Config(
                "excitation needs matching nonempty amplitude and frequency lists".into(),
            ));
        }
        Ok(())
    }

    fn eval(&self, t: f64, phases: &[Vec<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            phases.len(),
            phases.iter().map(|ph| {
                self.amplitudes
                    .iter()
                    .zip(&self.frequencies_hz)
                    .zip(ph)
                    .map(|((a, f), p)| a * (TAU * f * t + p).sin())
                    .sum::<f64>()
            }),
        )
    }
}

/// Additive process noise on ẋ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSignal {
    Zero,
    /// Components alternate `a cos(2πft)`, `a sin(2πft)`.
    Rotating {
        amplitude: f64,
        frequency_hz: f64,
    },
}

impl NoiseSignal {
    pub fn eval(&self, t: f64, n: usize) -> DVector<f64> {
        match self {
            NoiseSignal::Zero => DVector::zeros(n),
            NoiseSignal::Rotating {
                amplitude,
                frequency_hz,
            } => {
                let phase = TAU * frequency_hz * t;
                DVector::from_iterator(
                    n,
                    (0..n).map(|i| amplitude * if i % 2 == 0 { phase.cos() } else { phase.sin() }),
                )
            }
        }
    }

    /// Bound on ‖d̄(t)‖ over all t.
    pub fn norm_bound(&self, n: usize) -> f64 {
        match self {
            NoiseSignal::Zero => 0.0,
            NoiseSignal::Rotating { amplitude, .. } => {
                let pairs = n / 2;
                amplitude.abs() * ((pairs + n % 2) as f64).sqrt()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionPlan {
    pub samples: usize,
    pub sample_dt: f64,
    pub segment_samples: usize,
    pub initial_box: StateBox,
    #[serde(default = "default_collection_cap")]
    pub divergence_cap: f64,
}

fn default_collection_cap() -> f64 {
    crate::simulate::DEFAULT_DIVERGENCE_CAP
}

/// Simulates noisy open-loop segments from random initial states until
/// `plan.samples` snapshots are gathered. Segments that leave the
/// divergence cap are discarded.
pub fn collect_data<R: Rng + ?Sized>(
    plant: &Plant,
    excitation: &Excitation,
    noise: &NoiseSignal,
    plan: &CollectionPlan,
    rng: &mut R,
) -> Result<Vec<Sample>> {
    excitation.validate()?;
    if plan.samples == 0 || plan.segment_samples == 0 || !(plan.sample_dt > 0.0) {
        return Err(Error::InvalidArgument(
            "collection needs T > 0, segments > 0 and dt > 0".into(),
        ));
    }
    if plan.initial_box.dim() != plant.n {
        return Err(Error::Dimension(
            "initial-state box dimension differs from plant".into(),
        ));
    }
    let dt = plan.sample_dt;
    let mut out: Vec<Sample> = Vec::with_capacity(plan.samples);
    let mut discarded = 0usize;
    while out.len() < plan.samples {
        if discarded > 100 * (plan.samples / plan.segment_samples + 1) {
            return Err(Error::InvalidArgument(
                "too many divergent collection segments".into(),
            ));
        }
        let mut x = plan.initial_box.sample(rng);
        let phases: Vec<Vec<f64>> = (0..plant.m)
            .map(|_| {
                excitation
                    .amplitudes
                    .iter()
                    .map(|_| TAU * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let t0 = out.len() as f64 * dt;
        let field = |t: f64, x: &DVector<f64>| {
            plant.vector_field(x, &excitation.eval(t, &phases)) + noise.eval(t0 + t, plant.n)
        };
        let mut segment = Vec::with_capacity(plan.segment_samples);
        let mut ok = true;
        for j in 0..plan.segment_samples {
            let t = j as f64 * dt;
            let u = excitation.eval(t, &phases);
            let xdot = field(t, &x);
            segment.push(Sample {
                t: t0 + t,
                x: x.clone(),
                u,
                xdot,
            });
            let k1 = field(t, &x);
            let k2 = field(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
            let k3 = field(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
            let k4 = field(t + dt, &(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            if !x.iter().all(|v| v.is_finite()) || x.norm() > plan.divergence_cap {
                ok = false;
                break;
            }
        }
        if ok {
            out.extend(segment);
        } else {
            discarded += 1;
            log::warn!("discarding divergent collection segment starting at t = {t0}");
        }
    }
    out.truncate(plan.samples);
    for s in &out {
        ensure_finite(s.xdot.as_slice(), "collected derivative")?;
    }
    Ok(out)
}

pub fn write_samples_csv<W: Write>(samples: &[Sample], writer: W) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.x.len());
    let m = samples.first().map_or(0, |s| s.u.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("xdot_{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.t.to_string()];
        row.extend(s.x.iter().map(f64::to_string));
        row.extend(s.u.iter().map(f64::to_string));
        row.extend(s.xdot.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: std::io::Read>(reader: R, n: usize, m: usize) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != 1 + 2 * n + m {
            return Err(Error::Dimension(format!(
                "sample row has {} fields",
                record.len()
            )));
        }
        let values: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad sample value `{f}`: {e}")))
            })
            .collect::<Result<_>>()?;
        out.push(Sample {
            t: values[0],
            x: DVector::from_column_slice(&values[1..1 + n]),
            u: DVector::from_column_slice(&values[1 + n..1 + n + m]),
            xdot: DVector::from_column_slice(&values[1 + n + m..]),
        });
    }
    Ok(out)
}
