//! Noisy trajectories and their ensemble averages.
//!
//! Step `n` (for `n = 1..=N`) applies the dipole kick for the field value
//! `E(n dt)` and then one interaction step `U_I(dt)`. `E(0)` is never used.
//! Each sample is compared with the noiseless reference `exact_evolve(psi0,
//! n dt)` and contributes its atom density to the mixed-state average.
//!
//! Samples are processed in fixed chunks of consecutive stream ids. With
//! `bitrepro` set, chunk partial sums are merged strictly in chunk order, so
//! the output does not depend on the number of worker threads.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{
    build_step_operator, reference_trajectory, JcmParams, JcmStepOperator, RecordSchedule,
};
use crate::error::{invalid, Error, Result};
use crate::field::{FieldPath, FieldWalk, NoiseParams};
use crate::rotation::{rotate_blocks, RotationTable};
use crate::state::{
    atom_density_of_blocks, bloch_from_density, make_initial_state, overlap, AtomDensity,
    BlochVector, InitialPreset, StateVector,
};
use crate::sum::NeumaierSum;

/// Samples per work item.
pub const CHUNK_SAMPLES: u64 = 64;
/// Work items evaluated between ordered merges.
const CHUNK_GROUP: u64 = 64;

/// Observables of a single sample at one recorded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    /// `|<psi_0(n dt)|psi(n dt)>|^2`; exactly 1 at step 0.
    pub fidelity: f64,
    pub density: AtomDensity,
    pub norm_sq: f64,
}

/// Amplitude storage and step arithmetic for one trajectory.
trait Engine {
    fn load(&mut self, amps: &[Complex64]);
    /// Runs `count` steps. Each step kicks with the `(cos, sin)` pair returned
    /// by `kick` and then applies one interaction step.
    fn run<F: FnMut() -> (f64, f64)>(&mut self, count: u64, kick: F);
    fn store(&self, out: &mut [Complex64]);
}

/// Runtime-sized fallback built on the public step routines.
struct DynamicEngine<'a> {
    op: &'a JcmStepOperator,
    amps: Vec<Complex64>,
}

impl<'a> DynamicEngine<'a> {
    fn new(op: &'a JcmStepOperator) -> Self {
        Self {
            op,
            amps: vec![Complex64::new(0.0, 0.0); 2 * (op.truncation() + 1)],
        }
    }
}

impl Engine for DynamicEngine<'_> {
    fn load(&mut self, amps: &[Complex64]) {
        self.amps.copy_from_slice(amps);
    }

    fn run<F: FnMut() -> (f64, f64)>(&mut self, count: u64, mut kick: F) {
        let (g, e) = self.amps.split_at_mut(self.op.truncation() + 1);
        for _ in 0..count {
            let (c, s) = kick();
            rotate_blocks(g, e, c, s);
            self.op.apply_to_blocks(g, e);
        }
    }

    fn store(&self, out: &mut [Complex64]) {
        out.copy_from_slice(&self.amps);
    }
}

/// Split real/imaginary arrays of compile-time length `D = K + 1`. The step
/// unrolls completely and stays in registers, which is several times faster
/// than the slice version. The arithmetic is written term for term like
/// `rotate_blocks` and `apply_to_blocks`, so both engines agree bit for bit.
struct FixedEngine<const D: usize> {
    gr: [f64; D],
    gi: [f64; D],
    er: [f64; D],
    ei: [f64; D],
    cos: [f64; D],
    sin: [f64; D],
    top: f64,
}

impl<const D: usize> FixedEngine<D> {
    fn new(op: &JcmStepOperator) -> Self {
        debug_assert_eq!(op.truncation() + 1, D);
        let mut cos = [1.0; D];
        let mut sin = [0.0; D];
        for j in 1..D {
            (cos[j], sin[j]) = op.pair_cos_sin(j);
        }
        Self {
            gr: [0.0; D],
            gi: [0.0; D],
            er: [0.0; D],
            ei: [0.0; D],
            cos,
            sin,
            top: op.top_cos(),
        }
    }
}

impl<const D: usize> Engine for FixedEngine<D> {
    fn load(&mut self, amps: &[Complex64]) {
        for k in 0..D {
            self.gr[k] = amps[k].re;
            self.gi[k] = amps[k].im;
            self.er[k] = amps[D + k].re;
            self.ei[k] = amps[D + k].im;
        }
    }

    fn run<F: FnMut() -> (f64, f64)>(&mut self, count: u64, mut kick: F) {
        let (mut gr, mut gi, mut er, mut ei) = (self.gr, self.gi, self.er, self.ei);
        for _ in 0..count {
            let (c, s) = kick();
            for k in 0..D {
                let (ar, ai, br, bi) = (gr[k], gi[k], er[k], ei[k]);
                gr[k] = c * ar + s * br;
                gi[k] = c * ai + s * bi;
                er[k] = c * br - s * ar;
                ei[k] = c * bi - s * ai;
            }
            for j in 1..D {
                let (cj, sj) = (self.cos[j], self.sin[j]);
                let (ar, ai, br, bi) = (gr[j], gi[j], er[j - 1], ei[j - 1]);
                gr[j] = cj * ar + sj * bi;
                gi[j] = cj * ai - sj * br;
                er[j - 1] = sj * ai + cj * br;
                ei[j - 1] = cj * bi - sj * ar;
            }
            er[D - 1] *= self.top;
            ei[D - 1] *= self.top;
        }
        (self.gr, self.gi, self.er, self.ei) = (gr, gi, er, ei);
    }

    fn store(&self, out: &mut [Complex64]) {
        for k in 0..D {
            out[k] = Complex64::new(self.gr[k], self.gi[k]);
            out[D + k] = Complex64::new(self.er[k], self.ei[k]);
        }
    }
}

/// Calls `$body` with `$make` bound to a constructor for the fastest engine
/// available for the operator's truncation.
macro_rules! with_engine {
    ($op:expr, $make:ident => $body:expr) => {
        match $op.truncation() {
            1 => {
                let $make = || FixedEngine::<2>::new($op);
                $body
            }
            2 => {
                let $make = || FixedEngine::<3>::new($op);
                $body
            }
            3 => {
                let $make = || FixedEngine::<4>::new($op);
                $body
            }
            4 => {
                let $make = || FixedEngine::<5>::new($op);
                $body
            }
            5 => {
                let $make = || FixedEngine::<6>::new($op);
                $body
            }
            6 => {
                let $make = || FixedEngine::<7>::new($op);
                $body
            }
            7 => {
                let $make = || FixedEngine::<8>::new($op);
                $body
            }
            8 => {
                let $make = || FixedEngine::<9>::new($op);
                $body
            }
            _ => {
                let $make = || DynamicEngine::new($op);
                $body
            }
        }
    };
}

struct Propagator<'a, E> {
    engine: E,
    table: &'a RotationTable,
    buf: Vec<Complex64>,
    split: usize,
}

impl<'a, E: Engine> Propagator<'a, E> {
    fn new(engine: E, table: &'a RotationTable, initial: &StateVector) -> Self {
        let mut prop = Self {
            engine,
            table,
            buf: initial.amplitudes().to_vec(),
            split: initial.truncation() + 1,
        };
        prop.reset(initial);
        prop
    }

    fn reset(&mut self, initial: &StateVector) {
        self.engine.load(initial.amplitudes());
    }

    /// Runs `count` steps, taking walk levels from `level`.
    fn run<L: FnMut() -> i64>(&mut self, count: u64, mut level: L) {
        let table = self.table;
        self.engine.run(count, || table.get(level()));
    }

    fn record(&mut self, step: u64, reference: &StateVector) -> TrajectoryRecord {
        self.engine.store(&mut self.buf);
        let (g, e) = self.buf.split_at(self.split);
        let density = atom_density_of_blocks(g, e);
        let fidelity = if step == 0 {
            1.0
        } else {
            overlap(reference.amplitudes(), &self.buf).norm_sqr()
        };
        TrajectoryRecord {
            step,
            fidelity,
            density,
            norm_sq: density.trace(),
        }
    }
}

fn table_for(dt: f64, noise: &NoiseParams, last_step: u64) -> RotationTable {
    if noise.is_silent() {
        return RotationTable::new(dt, noise.delta_e, 0);
    }
    // eight standard deviations of the walk at the final step covers all but
    // astronomically rare excursions; anything beyond is evaluated directly
    let sigma = (2.0 * noise.jump_probability * last_step as f64).sqrt();
    let reach = ((8.0 * sigma).ceil() as i64 + 64)
        .min(last_step as i64)
        .min(1 << 16);
    RotationTable::new(dt, noise.delta_e, reach)
}

fn check_reference(reference: &[StateVector], schedule: &RecordSchedule, k: usize) -> Result<()> {
    if reference.len() != schedule.len() {
        return Err(Error::ReferenceMisaligned(format!(
            "{} reference states for {} recorded steps",
            reference.len(),
            schedule.len()
        )));
    }
    if let Some(bad) = reference.iter().find(|r| r.truncation() != k) {
        return Err(Error::TruncationMismatch {
            left: bad.truncation(),
            right: k,
        });
    }
    Ok(())
}

/// Propagates one sample along a stored field path.
///
/// `reference[i]` must be the noiseless state at `schedule.steps()[i]`.
pub fn run_trajectory(
    initial: &StateVector,
    op: &JcmStepOperator,
    path: &FieldPath,
    reference: &[StateVector],
    schedule: &RecordSchedule,
) -> Result<Vec<TrajectoryRecord>> {
    let k = op.truncation();
    if initial.truncation() != k {
        return Err(Error::TruncationMismatch {
            left: initial.truncation(),
            right: k,
        });
    }
    let last = schedule.last_step();
    if (path.len() as u64) < last + 1 {
        return Err(Error::PathTooShort {
            got: path.len(),
            needed: last as usize + 1,
        });
    }
    check_reference(reference, schedule, k)?;
    let table = RotationTable::new(op.dt(), path.delta_e(), 0);
    let out = with_engine!(op, make => trajectory_with(make(), &table, initial, path, reference, schedule));
    Ok(out)
}

fn trajectory_with<E: Engine>(
    engine: E,
    table: &RotationTable,
    initial: &StateVector,
    path: &FieldPath,
    reference: &[StateVector],
    schedule: &RecordSchedule,
) -> Vec<TrajectoryRecord> {
    let mut prop = Propagator::new(engine, table, initial);
    let steps = schedule.steps();
    let mut out = Vec::with_capacity(steps.len());
    out.push(prop.record(0, &reference[0]));
    for (slot, pair) in steps.windows(2).enumerate() {
        let mut levels = path.levels()[pair[0] as usize + 1..=pair[1] as usize].iter();
        prop.run(pair[1] - pair[0], || {
            *levels.next().expect("path length checked")
        });
        out.push(prop.record(pair[1], &reference[slot + 1]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOptions {
    /// Record every `record_stride`-th step (plus the first and last).
    pub record_stride: u64,
    /// Stop after this many steps instead of `N`. Useful when only early
    /// times are analysed.
    pub horizon_steps: Option<u64>,
    /// Merge partial sums in a fixed order for thread-count independent output.
    pub bitrepro: bool,
    /// First stream id; sample `i` uses stream `stream_offset + i`.
    pub stream_offset: u64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            record_stride: 100,
            horizon_steps: None,
            bitrepro: true,
            stream_offset: 0,
        }
    }
}

impl EnsembleOptions {
    fn last_step(&self, jcm: &JcmParams) -> Result<u64> {
        match self.horizon_steps {
            Some(h) if h == 0 || h > jcm.steps => Err(invalid(
                "horizon_steps",
                format!("must lie in [1, {}], got {h}", jcm.steps),
            )),
            Some(h) => Ok(h),
            None => Ok(jcm.steps),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SlotSums {
    fidelity: NeumaierSum,
    fidelity_sq: NeumaierSum,
    ee: NeumaierSum,
    gg: NeumaierSum,
    eg_re: NeumaierSum,
    eg_im: NeumaierSum,
    sz_sq: NeumaierSum,
    norm_sq_sq: NeumaierSum,
}

impl SlotSums {
    #[inline]
    fn add(&mut self, r: &TrajectoryRecord) {
        self.fidelity.add(r.fidelity);
        self.fidelity_sq.add(r.fidelity * r.fidelity);
        self.ee.add(r.density.ee);
        self.gg.add(r.density.gg);
        self.eg_re.add(r.density.eg.re);
        self.eg_im.add(r.density.eg.im);
        let sz = r.density.ee - r.density.gg;
        self.sz_sq.add(sz * sz);
        self.norm_sq_sq.add(r.norm_sq * r.norm_sq);
    }

    fn merge(&mut self, o: &SlotSums) {
        self.fidelity.merge(&o.fidelity);
        self.fidelity_sq.merge(&o.fidelity_sq);
        self.ee.merge(&o.ee);
        self.gg.merge(&o.gg);
        self.eg_re.merge(&o.eg_re);
        self.eg_im.merge(&o.eg_im);
        self.sz_sq.merge(&o.sz_sq);
        self.norm_sq_sq.merge(&o.norm_sq_sq);
    }
}

fn merge_all(into: &mut [SlotSums], from: &[SlotSums]) {
    for (a, b) in into.iter_mut().zip(from) {
        a.merge(b);
    }
}

/// Ensemble averages at one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePoint {
    pub step: u64,
    pub t_over_t: f64,
    /// Mean fidelity, clipped to `[0, 1]` against rounding.
    pub fidelity: f64,
    pub stderr_fidelity: f64,
    pub bloch: BlochVector,
    pub stderr_sz: f64,
    /// Mean squared norm of the samples.
    pub norm_sq: f64,
    pub stderr_norm_sq: f64,
    /// Averaged reduced density matrix of the atom (not renormalized).
    pub density: AtomDensity,
}

impl EnsemblePoint {
    pub fn norm_deficit(&self) -> f64 {
        1.0 - self.norm_sq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub initial: InitialPreset,
    pub jcm: JcmParams,
    pub noise: NoiseParams,
    pub samples: u64,
    pub points: Vec<EnsemblePoint>,
}

impl EnsembleStats {
    pub fn final_point(&self) -> &EnsemblePoint {
        self.points
            .last()
            .expect("an ensemble always records step 0")
    }

    /// Point recorded exactly at `step`, if any.
    pub fn at_step(&self, step: u64) -> Option<&EnsemblePoint> {
        self.points
            .binary_search_by_key(&step, |p| p.step)
            .ok()
            .map(|i| &self.points[i])
    }

    /// `(t/T, F, stderr_F)` triples for fitting.
    pub fn fidelity_series(&self) -> Vec<(f64, f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.t_over_t, p.fidelity, p.stderr_fidelity))
            .collect()
    }
}

fn finish(
    sums: &[SlotSums],
    schedule: &RecordSchedule,
    samples: u64,
    jcm: &JcmParams,
) -> Result<Vec<EnsemblePoint>> {
    let m = samples as f64;
    let se = |sq: f64, mean: f64| {
        if samples < 2 {
            0.0
        } else {
            ((sq / m - mean * mean).max(0.0) / (m - 1.0)).sqrt()
        }
    };
    schedule
        .steps()
        .iter()
        .zip(sums)
        .map(|(&step, s)| {
            let f = s.fidelity.value() / m;
            let density = AtomDensity {
                ee: s.ee.value() / m,
                gg: s.gg.value() / m,
                eg: Complex64::new(s.eg_re.value() / m, s.eg_im.value() / m),
            };
            let (bloch, _) = bloch_from_density(&density)?;
            let norm = density.trace();
            let sz_raw = density.ee - density.gg;
            Ok(EnsemblePoint {
                step,
                t_over_t: step as f64 / jcm.steps as f64,
                fidelity: f.clamp(0.0, 1.0),
                stderr_fidelity: se(s.fidelity_sq.value(), f),
                bloch,
                stderr_sz: se(s.sz_sq.value(), sz_raw),
                norm_sq: norm,
                stderr_norm_sq: se(s.norm_sq_sq.value(), norm),
                density,
            })
        })
        .collect()
}

struct Shared<'a> {
    initial: StateVector,
    reference: Vec<StateVector>,
    schedule: RecordSchedule,
    op: JcmStepOperator,
    table: RotationTable,
    noise: &'a NoiseParams,
    stream_offset: u64,
}

impl Shared<'_> {
    fn run_chunk(&self, chunk: u64) -> Vec<SlotSums> {
        with_engine!(&self.op, make => self.run_chunk_with(make(), chunk))
    }

    fn run_chunk_with<E: Engine>(&self, engine: E, chunk: u64) -> Vec<SlotSums> {
        let mut sums = vec![SlotSums::default(); self.schedule.len()];
        let lo = chunk * CHUNK_SAMPLES;
        let hi = (lo + CHUNK_SAMPLES).min(self.noise.samples);
        let steps = self.schedule.steps();
        let mut prop = Propagator::new(engine, &self.table, &self.initial);
        for sample in lo..hi {
            prop.reset(&self.initial);
            let mut walk = FieldWalk::new(self.noise, self.stream_offset + sample);
            sums[0].add(&prop.record(0, &self.reference[0]));
            for (slot, pair) in steps.windows(2).enumerate() {
                prop.run(pair[1] - pair[0], || walk.advance());
                sums[slot + 1].add(&prop.record(pair[1], &self.reference[slot + 1]));
            }
        }
        sums
    }
}

/// Monte Carlo average over `noise.samples` trajectories.
pub fn run_ensemble(
    initial: &InitialPreset,
    jcm: &JcmParams,
    noise: &NoiseParams,
    options: &EnsembleOptions,
) -> Result<EnsembleStats> {
    jcm.validate()?;
    noise.validate()?;
    let last = options.last_step(jcm)?;
    let schedule = RecordSchedule::new(last, options.record_stride)?;
    let psi0 = make_initial_state(initial, jcm.truncation)?;
    let reference = reference_trajectory(&psi0, jcm, &schedule)?;
    let op = build_step_operator(jcm);
    let shared = Shared {
        table: table_for(op.dt(), noise, last),
        initial: psi0,
        reference,
        schedule,
        op,
        noise,
        stream_offset: options.stream_offset,
    };

    let points = if noise.is_silent() {
        // every path is identically zero, so all samples coincide
        let single = NoiseParams {
            samples: 1,
            ..noise.clone()
        };
        let one = Shared {
            noise: &single,
            ..shared
        };
        let mut pts = finish(&one.run_chunk(0), &one.schedule, 1, jcm)?;
        for p in &mut pts {
            p.stderr_fidelity = 0.0;
            p.stderr_sz = 0.0;
            p.stderr_norm_sq = 0.0;
        }
        pts
    } else {
        let chunks = noise.samples.div_ceil(CHUNK_SAMPLES);
        let width = shared.schedule.len();
        let sums = if options.bitrepro {
            let mut total = vec![SlotSums::default(); width];
            let mut start = 0;
            while start < chunks {
                let end = (start + CHUNK_GROUP).min(chunks);
                let parts: Vec<Vec<SlotSums>> = (start..end)
                    .into_par_iter()
                    .map(|c| shared.run_chunk(c))
                    .collect();
                for part in &parts {
                    merge_all(&mut total, part);
                }
                start = end;
            }
            total
        } else {
            (0..chunks)
                .into_par_iter()
                .map(|c| shared.run_chunk(c))
                .reduce(
                    || vec![SlotSums::default(); width],
                    |mut a, b| {
                        merge_all(&mut a, &b);
                        a
                    },
                )
        };
        finish(&sums, &shared.schedule, noise.samples, jcm)?
    };

    Ok(EnsembleStats {
        initial: initial.clone(),
        jcm: jcm.clone(),
        noise: noise.clone(),
        samples: noise.samples,
        points,
    })
}

/// One ensemble per sample count in `sample_counts`, sharing every other
/// parameter. Consecutive runs draw from disjoint stream ranges.
pub fn convergence_study(
    initial: &InitialPreset,
    jcm: &JcmParams,
    noise: &NoiseParams,
    sample_counts: &[u64],
    options: &EnsembleOptions,
) -> Result<Vec<EnsembleStats>> {
    if sample_counts.is_empty() {
        return Err(Error::Empty("sample count list"));
    }
    let mut offset = options.stream_offset;
    let mut out = Vec::with_capacity(sample_counts.len());
    for &m in sample_counts {
        let run_noise = NoiseParams {
            samples: m,
            ..noise.clone()
        };
        let run_opts = EnsembleOptions {
            stream_offset: offset,
            ..options.clone()
        };
        out.push(run_ensemble(initial, jcm, &run_noise, &run_opts)?);
        offset += m;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub jump_probability: f64,
    pub delta_e: f64,
    pub fidelity: f64,
    pub stderr: f64,
}

/// `F(T)` on the grid `p_grid x delta_e_grid`, row-major in `p`.
///
/// Every vertex reuses the same stream ids (common random numbers), which
/// keeps differences between neighbouring vertices much less noisy than the
/// vertices themselves.
pub fn sweep_fidelity_surface(
    initial: &InitialPreset,
    p_grid: &[f64],
    delta_e_grid: &[f64],
    jcm: &JcmParams,
    noise: &NoiseParams,
    options: &EnsembleOptions,
) -> Result<Vec<SweepPoint>> {
    if p_grid.is_empty() || delta_e_grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let last = options.last_step(jcm)?;
    let opts = EnsembleOptions {
        record_stride: last,
        ..options.clone()
    };
    let mut out = Vec::with_capacity(p_grid.len() * delta_e_grid.len());
    for &p in p_grid {
        for &de in delta_e_grid {
            let vertex = NoiseParams {
                jump_probability: p,
                delta_e: de,
                ..noise.clone()
            };
            vertex.validate()?;
            let stats = run_ensemble(initial, jcm, &vertex, &opts)?;
            let fin = stats.final_point();
            out.push(SweepPoint {
                jump_probability: p,
                delta_e: de,
                fidelity: fin.fidelity,
                stderr: fin.stderr_fidelity,
            });
        }
    }
    Ok(out)
}
