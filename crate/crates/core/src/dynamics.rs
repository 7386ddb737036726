//! Vector fields, fixed-step RK4 integration and snapshot generation.

use crate::numfmt::sig15;
use crate::region::{Expr, Region};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Scalar state feedback `u = k(x)`.
pub type PolicyFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type Policy = Arc<PolicyFn>;

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "box bounds of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::Invalid(format!(
                "box needs finite lo < hi, got {lo:?}, {hi:?}"
            )));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&xi, (&l, &h))| l <= xi && xi <= h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Intersection with `[lo, hi]`; an empty overlap collapses to a flat box.
    pub fn clip(&self, lo: &[f64], hi: &[f64]) -> BoxDomain {
        let l: Vec<f64> = self.lo.iter().zip(lo).map(|(a, b)| a.max(*b)).collect();
        let h: Vec<f64> = self
            .hi
            .iter()
            .zip(hi)
            .zip(&l)
            .map(|((a, b), l)| a.min(*b).max(*l))
            .collect();
        BoxDomain { lo: l, hi: h }
    }

    pub fn as_region(&self) -> Region {
        Region::boxed(&self.lo, &self.hi)
    }

    /// `n` evenly spaced points per axis, endpoints included, last axis fastest.
    pub fn grid(&self, dims: &[usize]) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = dims
            .iter()
            .enumerate()
            .map(|(i, &n)| linspace(self.lo[i], self.hi[i], n))
            .collect();
        let total: usize = dims.iter().product();
        (0..total)
            .map(|mut flat| {
                let mut x = vec![0.0; dims.len()];
                for i in (0..dims.len()).rev() {
                    x[i] = axes[i][flat % dims[i]];
                    flat /= dims[i];
                }
                x
            })
            .collect()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A time-invariant vector field `ẋ = F(x)` on a box domain.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    domain: BoxDomain,
    f: Arc<FieldFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(name: impl Into<String>, domain: BoxDomain, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorField {
            name: name.into(),
            domain,
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn zero(domain: BoxDomain) -> Self {
        VectorField::new("zero", domain, |_, out| out.fill(0.0))
    }

    pub fn constant(domain: BoxDomain, v: Vec<f64>) -> Self {
        VectorField::new("constant", domain, move |_, out| out.copy_from_slice(&v))
    }

    /// `ẋ = A x`.
    pub fn linear(domain: BoxDomain, a: DMatrix<f64>) -> Self {
        VectorField::new("linear", domain, move |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..x.len()).map(|j| a[(i, j)] * x[j]).sum();
            }
        })
    }

    /// Boat on a river: `ẋ1 = 1 + 0.125 cos(0.5 x1) − 0.125 sin(0.5 x2)`, `ẋ2 = 0`, on `[0, 10]²`.
    pub fn example1_drift() -> Self {
        let domain = BoxDomain::new(vec![0.0, 0.0], vec![10.0, 10.0]).expect("static box");
        VectorField::new("example1", domain, |x, out| {
            out[0] = 1.0 + 0.125 * (0.5 * x[0]).cos() - 0.125 * (0.5 * x[1]).sin();
            out[1] = 0.0;
        })
    }

    /// `ẋ1 = −0.125 + 0.125 cos(0.5 x1) − 0.125 sin(0.5 x2)`, `ẋ2 = 0`, on `[−8, 8]²`.
    pub fn example2_drift() -> Self {
        let domain = BoxDomain::new(vec![-8.0, -8.0], vec![8.0, 8.0]).expect("static box");
        VectorField::new("example2", domain, |x, out| {
            out[0] = -0.125 + 0.125 * (0.5 * x[0]).cos() - 0.125 * (0.5 * x[1]).sin();
            out[1] = 0.0;
        })
    }

    /// Unit vector along `axis`: the input field `g` of both built-in examples when `axis = 1`.
    pub fn unit_input(domain: BoxDomain, axis: usize) -> Self {
        let mut v = vec![0.0; domain.dim()];
        v[axis] = 1.0;
        VectorField::constant(domain, v).named("unit_input")
    }

    /// Field whose i-th component is the expression `exprs[i]` in `x1, …, xn`.
    pub fn from_expressions(name: &str, domain: BoxDomain, exprs: &[String]) -> Result<Self> {
        if exprs.len() != domain.dim() {
            return Err(Error::Dimension(format!(
                "{} expressions for a {}-dimensional domain",
                exprs.len(),
                domain.dim()
            )));
        }
        let parsed = exprs
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        for e in &parsed {
            if e.min_dim() > domain.dim() {
                return Err(Error::Dimension(format!(
                    "`{}` references x{}",
                    e.source(),
                    e.min_dim()
                )));
            }
        }
        Ok(VectorField::new(name, domain, move |x, out| {
            for (o, e) in out.iter_mut().zip(&parsed) {
                *o = e.eval(x);
            }
        }))
    }

    /// `ẋ = f(x) + g(x) k(x)` for a scalar feedback `k`.
    pub fn closed_loop(f: &VectorField, g: &VectorField, k: Policy) -> Self {
        let (f, g) = (f.clone(), g.clone());
        let name = format!("{}+k", f.name);
        let domain = f.domain.clone();
        let n = f.dim();
        VectorField::new(name, domain, move |x, out| {
            let mut gx = vec![0.0; n];
            f.eval_into(x, out);
            g.eval_into(x, &mut gx);
            let u = k(x);
            for (o, gi) in out.iter_mut().zip(&gx) {
                *o += gi * u;
            }
        })
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

/// One classical RK4 step of `ẋ = F(x)`.
pub fn flow_step(field: &VectorField, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let bad = |state: &[f64]| Error::Integration {
        state: state.to_vec(),
    };
    let stage = |y: &[f64], out: &mut [f64]| -> Result<()> {
        field.eval_into(y, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(bad(y))
        }
    };
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    stage(x, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    stage(&tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    stage(&tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    stage(&tmp, &mut k4)?;
    let out: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(bad(x))
    }
}

/// Why a simulation stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Horizon,
    LeftDomain,
    Reached,
}

impl End {
    pub fn as_str(self) -> &'static str {
        match self {
            End::Horizon => "horizon",
            End::LeftDomain => "left_domain",
            End::Reached => "reached",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Option<Vec<f64>>,
    pub end: End,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    /// Smallest distance from any recorded state to `p`.
    pub fn closest_approach(&self, p: &[f64]) -> f64 {
        self.states
            .iter()
            .map(|x| dist(x, p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        self.write_csv_to(&mut out)
            .map_err(|e| Error::io(path, e))?;
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        if self.inputs.is_some() {
            header.push("u".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![sig15(*t)];
            row.extend(x.iter().map(|v| sig15(*v)));
            if let Some(u) = &self.inputs {
                row.push(sig15(u[k]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn step_count(t_final: f64, dt: f64) -> usize {
    (t_final / dt - 1e-9).ceil().max(0.0) as usize
}

/// Integrates until `t_final`, domain exit, or entry into `stop`.
pub fn simulate(
    field: &VectorField,
    x0: &[f64],
    t_final: f64,
    dt: f64,
    stop: Option<&Region>,
) -> Result<Trajectory> {
    run(field, x0, t_final, dt, stop, None)
}

/// Like [`simulate`] on `f + g·k`, recording `u_k = k(x_k)` next to every state.
pub fn simulate_controlled(
    f: &VectorField,
    g: &VectorField,
    k: Policy,
    x0: &[f64],
    t_final: f64,
    dt: f64,
    stop: Option<&Region>,
) -> Result<Trajectory> {
    let cl = VectorField::closed_loop(f, g, k.clone());
    run(&cl, x0, t_final, dt, stop, Some(&*k))
}

fn run(
    field: &VectorField,
    x0: &[f64],
    t_final: f64,
    dt: f64,
    stop: Option<&Region>,
    policy: Option<&PolicyFn>,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(dt <= t_final) {
        return Err(Error::Invalid(format!(
            "need 0 < dt <= t_final, got dt={dt}, t_final={t_final}"
        )));
    }
    if x0.len() != field.dim() {
        return Err(Error::Dimension(format!(
            "x0 has {} entries, field has {}",
            x0.len(),
            field.dim()
        )));
    }
    let steps = step_count(t_final, dt);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = policy.map(|_| Vec::with_capacity(steps + 1));
    let mut x = x0.to_vec();
    let mut end = End::Horizon;
    for k in 0..=steps {
        times.push(k as f64 * dt);
        if let (Some(u), Some(p)) = (inputs.as_mut(), policy) {
            u.push(p(&x));
        }
        states.push(x.clone());
        if !field.domain().contains(&x) {
            end = End::LeftDomain;
            break;
        }
        if stop.is_some_and(|r| r.contains(&x)) {
            end = End::Reached;
            break;
        }
        if k < steps {
            x = flow_step(field, &x, dt)?;
        }
    }
    Ok(Trajectory {
        times,
        states,
        inputs,
        end,
    })
}

/// Initial conditions for snapshot pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Uniform grid with the given number of points per axis, endpoints included.
    Grid(Vec<usize>),
    /// Uniform random points from a seeded generator.
    Random { count: usize, seed: u64 },
}

/// Paired states `y_i = s_dt(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub dt: f64,
    /// Number of sampled initial conditions before out-of-domain images were dropped.
    pub sampled: usize,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `[X | Y]` as an `M × 2n` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.x.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.len(), 2 * n, |i, j| {
            if j < n {
                self.x[i][j]
            } else {
                self.y[i][j - n]
            }
        })
    }

    pub fn from_matrix(m: &DMatrix<f64>, dt: f64) -> Result<Self> {
        if !m.ncols().is_multiple_of(2) || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "snapshot matrix is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.ncols() / 2;
        let row = |i: usize, off: usize| (0..n).map(|j| m[(i, off + j)]).collect::<Vec<_>>();
        Ok(SnapshotSet {
            x: (0..m.nrows()).map(|i| row(i, 0)).collect(),
            y: (0..m.nrows()).map(|i| row(i, n)).collect(),
            dt,
            sampled: m.nrows(),
        })
    }
}

pub fn generate_snapshots(
    field: &VectorField,
    sampling: &Sampling,
    dt: f64,
) -> Result<SnapshotSet> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    let dom = field.domain();
    let xs = match sampling {
        Sampling::Grid(dims) => {
            if dims.len() != dom.dim() || dims.contains(&0) {
                return Err(Error::Dimension(format!(
                    "grid {dims:?} for a {}-dimensional domain",
                    dom.dim()
                )));
            }
            dom.grid(dims)
        }
        Sampling::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*count)
                .map(|_| {
                    dom.lo
                        .iter()
                        .zip(&dom.hi)
                        .map(|(l, h)| rng.random_range(*l..=*h))
                        .collect()
                })
                .collect()
        }
    };
    let sampled = xs.len();
    let ys = xs
        .par_iter()
        .map(|x| flow_step(field, x, dt))
        .collect::<Result<Vec<_>>>()?;
    let (x, y): (Vec<_>, Vec<_>) = xs
        .into_iter()
        .zip(ys)
        .filter(|(_, y)| dom.contains(y))
        .unzip();
    if x.is_empty() {
        return Err(Error::NoSnapshots);
    }
    Ok(SnapshotSet { x, y, dt, sampled })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> BoxDomain {
        BoxDomain::new(vec![-10.0], vec![10.0]).unwrap()
    }

    fn decay() -> VectorField {
        VectorField::new("decay", line(), |x, o| o[0] = -x[0])
    }

    #[test]
    fn rk4_zero_field_is_stationary() {
        let f = VectorField::zero(BoxDomain::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap());
        assert_eq!(flow_step(&f, &[3.7, -1.2], 0.01).unwrap(), vec![3.7, -1.2]);
    }

    #[test]
    fn rk4_matches_exponential() {
        let y = flow_step(&decay(), &[1.0], 0.01).unwrap()[0];
        assert!((y - (-0.01f64).exp()).abs() < 1e-10);
        assert!((y - 0.99004983).abs() < 1e-8);
    }

    #[test]
    fn rk4_example1_against_fine_reference() {
        let f = VectorField::example1_drift();
        assert_eq!(f.eval(&[0.0, 0.0]), vec![1.125, 0.0]);
        let coarse = flow_step(&f, &[0.0, 0.0], 0.01).unwrap();
        let mut fine = vec![0.0, 0.0];
        for _ in 0..1000 {
            fine = flow_step(&f, &fine, 1e-5).unwrap();
        }
        assert!(dist(&coarse, &fine) < 1e-8);
    }

    #[test]
    fn non_finite_field_reports_state() {
        let f = VectorField::new("bad", line(), |x, o| o[0] = 1.0 / x[0]);
        match flow_step(&f, &[0.0], 0.1) {
            Err(Error::Integration { state }) => assert_eq!(state, vec![0.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulate_counts_states() {
        let f = VectorField::zero(BoxDomain::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap());
        let tr = simulate(&f, &[1.0, 2.0], 1.0, 0.03, None).unwrap();
        assert_eq!(tr.len(), (1.0f64 / 0.03).ceil() as usize + 1);
        assert!(tr.states.iter().all(|s| s == &vec![1.0, 2.0]));
        assert_eq!(tr.end, End::Horizon);
    }

    #[test]
    fn simulate_decay_to_one() {
        let tr = simulate(&decay(), &[1.0], 1.0, 0.01, None).unwrap();
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-7);
        assert!((tr.times.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example2_open_loop_keeps_x2() {
        let tr = simulate(
            &VectorField::example2_drift(),
            &[6.0, 0.0],
            20.0,
            0.01,
            None,
        )
        .unwrap();
        assert!(tr.states.iter().all(|s| s[1] == 0.0));
    }

    #[test]
    fn simulate_stops_on_exit_and_target() {
        let d = BoxDomain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let f = VectorField::constant(d, vec![1.0, 0.0]);
        let tr = simulate(&f, &[0.0, 0.0], 10.0, 0.01, None).unwrap();
        assert_eq!(tr.end, End::LeftDomain);
        assert!(tr.duration() < 2.02);
        let stop = Region::ball(&[1.0, 0.0], 0.05);
        let tr = simulate(&f, &[0.0, 0.0], 10.0, 0.01, Some(&stop)).unwrap();
        assert_eq!(tr.end, End::Reached);
        assert!(stop.contains(tr.last()));
    }

    #[test]
    fn snapshots_zero_field_random() {
        let f = VectorField::zero(BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        let s = generate_snapshots(
            &f,
            &Sampling::Random {
                count: 100,
                seed: 3,
            },
            0.01,
        )
        .unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.x, s.y);
    }

    #[test]
    fn snapshots_grid_cardinality() {
        let f = VectorField::zero(BoxDomain::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap());
        let s = generate_snapshots(&f, &Sampling::Grid(vec![50, 50]), 0.01).unwrap();
        assert_eq!(s.sampled, 2500);
        assert_eq!(s.len(), 2500);
    }

    #[test]
    fn snapshots_constant_field_translate() {
        let d = BoxDomain::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let g = VectorField::unit_input(d, 1);
        let s = generate_snapshots(&g, &Sampling::Grid(vec![50, 50]), 0.01).unwrap();
        assert_eq!(s.len(), 2450);
        for (x, y) in s.x.iter().zip(&s.y) {
            assert_eq!(y[0], x[0]);
            assert!((y[1] - x[1] - 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_snapshots_error() {
        let d = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let f = VectorField::constant(d, vec![1000.0]);
        assert!(matches!(
            generate_snapshots(&f, &Sampling::Grid(vec![5]), 0.01),
            Err(Error::NoSnapshots)
        ));
    }

    #[test]
    fn expression_field_matches_builtin() {
        let d = VectorField::example2_drift().domain().clone();
        let e = VectorField::from_expressions(
            "expr",
            d,
            &[
                "-0.125 + 0.125*cos(0.5*x1) - 0.125*sin(0.5*x2)".into(),
                "0".into(),
            ],
        )
        .unwrap();
        let b = VectorField::example2_drift();
        for x in [[0.3, -1.2], [5.0, 2.0], [-7.0, 7.5]] {
            let (a, c) = (e.eval(&x), b.eval(&x));
            assert!((a[0] - c[0]).abs() < 1e-15 && a[1] == c[1]);
        }
    }

    #[test]
    fn trajectory_csv_header() {
        let tr = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 2.0], vec![1.5, 2.0]],
            inputs: Some(vec![0.25, 0.0]),
            end: End::Horizon,
        };
        let mut buf = Vec::new();
        tr.write_csv_to(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,x1,x2,u\n0,1,2,0.25\n0.5,1.5,2,0\n"
        );
    }
}
