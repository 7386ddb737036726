//! Stage-by-stage execution of an [`ExperimentConfig`] with artifacts on disk.
//!
//! | stage        | writes                                                                       |
//! |--------------|------------------------------------------------------------------------------|
//! | `snapshots`  | `snapshots_{drift,input}.pfnavmat` (`[X \| Y]`) and `.meta`                  |
//! | `fit`        | `operator_{drift,input}.pfnavmat` (`P̂`) and `.meta`                          |
//! | `synthesize` | `problem_*.pfnavmat`, `problem.meta`, `density_pair.*`, `controller.*`       |
//! | `simulate`   | `closed_loop_KK.csv`, `open_loop_KK.csv`, `trajectories.csv`                 |
//! | `eval`       | `mc_report.txt`, `mc_samples.csv`                                            |
//! | `density-grid` | `density_grid.csv`                                                         |
//!
//! Every file is a pure function of the config (including its seed) and the
//! `--full` switch, so two runs produce byte-identical directories.

use crate::basis::{ProjectOptions, QuadGrid, RbfBasis, Role};
use crate::config::ExperimentConfig;
use crate::controller::{linearize, lqr_gain, NavigationController, BUNDLE_META};
use crate::dynamics::{
    generate_snapshots, simulate, simulate_controlled, BoxDomain, Sampling, SnapshotSet,
    Trajectory, VectorField,
};
use crate::lp::LpOptions;
use crate::matio::{read_matrix, write_matrix, Sidecar};
use crate::numfmt::sig15;
use crate::operator::{nsdmd, NsdmdOptions, OperatorApprox, SolverReport};
use crate::region::{midpoints, Region};
use crate::safety::{
    collision_probability_mc, occupancy_fraction, HazardModel, McOptions, McReport, Mu0Sampler,
};
use crate::synthesis::{synthesize, DensityPair, SafetyProblem, Synthesis};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// A config resolved into fields, basis and sets, bound to an output directory.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub cfg: ExperimentConfig,
    pub full: bool,
    pub out: PathBuf,
    pub f: VectorField,
    pub g: VectorField,
    pub domain: BoxDomain,
    pub basis: RbfBasis,
    /// Largest center spacing.
    pub spacing: f64,
    pub hazard: HazardModel,
    pub x0: Mu0Sampler,
}

#[derive(Clone, Debug)]
pub struct Operators {
    pub drift: OperatorApprox,
    pub input: OperatorApprox,
    pub reports: Option<(SolverReport, SolverReport)>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub closed: Trajectory,
    pub open: Trajectory,
}

/// What a full run ended with.
#[derive(Clone, Debug)]
pub struct Summary {
    pub synthesis: Synthesis,
    pub mc: Option<McReport>,
}

impl Scenario {
    /// `out` defaults to the config's `output_dir`, then to `out/<name>`.
    pub fn new(cfg: ExperimentConfig, full: bool, out: Option<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let out = out
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| Path::new("out").join(&cfg.name));
        let domain = cfg.domain()?;
        let f = cfg.drift()?;
        let g = cfg.input()?;
        let grid = cfg.basis_grid(full);
        let basis =
            RbfBasis::grid(&domain, grid, cfg.basis.sigma).map_err(Error::stage("basis"))?;
        let spacing = grid
            .iter()
            .enumerate()
            .map(|(i, &n)| (domain.hi[i] - domain.lo[i]) / (n - 1) as f64)
            .fold(0.0, f64::max);
        let hazard = HazardModel::new(&cfg.hazard, &domain).map_err(Error::stage("hazard"))?;
        let x0 = Mu0Sampler::new(cfg.sets.x0.clone(), &domain);
        Ok(Scenario {
            cfg,
            full,
            out,
            f,
            g,
            domain,
            basis,
            spacing,
            hazard,
            x0,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    fn meta(&self) -> Sidecar {
        let mut s = Sidecar::new();
        s.set("config_hash", self.cfg.hash())
            .set("basis_hash", self.basis.hash())
            .set("full", self.full);
        s
    }

    fn target(&self, radius: f64) -> Region {
        Region::ball(&self.cfg.sets.x_r, radius)
    }

    fn sampling(&self) -> Sampling {
        match self.cfg.sampling(self.full) {
            Sampling::Random { count, seed } => Sampling::Random {
                count: *count,
                seed: self.cfg.sub_seed(&format!("snapshots/{seed}")),
            },
            s => s.clone(),
        }
    }

    pub fn write_config(&self) -> Result<()> {
        self.ensure_out()?;
        let p = self.path("config.toml");
        std::fs::write(&p, self.cfg.to_toml()).map_err(|e| Error::io(p, e))
    }

    pub fn snapshots(&self) -> Result<(SnapshotSet, SnapshotSet)> {
        self.ensure_out()?;
        let dt = self.cfg.dynamics.dt;
        let sampling = self.sampling();
        let mut sets = Vec::new();
        for (label, field) in [("drift", &self.f), ("input", &self.g)] {
            let s = generate_snapshots(field, &sampling, dt).map_err(Error::stage("snapshots"))?;
            write_matrix(
                &self.path(&format!("snapshots_{label}.pfnavmat")),
                &s.to_matrix(),
            )?;
            let mut meta = self.meta();
            meta.set("dt", dt)
                .set("pairs", s.len())
                .set("sampled", s.sampled)
                .set("field", field.name());
            meta.write(&self.path(&format!("snapshots_{label}.meta")))?;
            sets.push(s);
        }
        let input = sets.pop().expect("two sets");
        Ok((sets.pop().expect("two sets"), input))
    }

    pub fn load_snapshots(&self) -> Result<(SnapshotSet, SnapshotSet)> {
        let load = |label: &str| -> Result<SnapshotSet> {
            let mp = self.path(&format!("snapshots_{label}.meta"));
            let meta = Sidecar::read(&mp).map_err(missing("snapshots"))?;
            let m = read_matrix(&self.path(&format!("snapshots_{label}.pfnavmat")))?;
            let mut s = SnapshotSet::from_matrix(&m, meta.req(&mp, "dt")?)?;
            s.sampled = meta.req(&mp, "sampled")?;
            Ok(s)
        };
        Ok((load("drift")?, load("input")?))
    }

    pub fn fit(&self, snaps: &(SnapshotSet, SnapshotSet)) -> Result<Operators> {
        self.ensure_out()?;
        let opts = NsdmdOptions::default();
        let mut out = Vec::new();
        for (label, s) in [("drift", &snaps.0), ("input", &snaps.1)] {
            let (op, rep) = nsdmd(s, &self.basis, &opts).map_err(Error::stage("fit"))?;
            write_matrix(&self.path(&format!("operator_{label}.pfnavmat")), &op.p_hat)?;
            let mut meta = self.meta();
            meta.set("dt", op.dt)
                .set("n", op.len())
                .set("fit_residual", op.fit_residual)
                .set("iterations", rep.iterations)
                .set("converged", rep.converged)
                .set("markov_violation", op.markov_violation())
                .set("generator_column_drift", op.generator_column_drift());
            meta.write(&self.path(&format!("operator_{label}.meta")))?;
            log::info!(
                "{label} operator: {} iterations, objective {:e}",
                rep.iterations,
                rep.objective
            );
            out.push((op, rep));
        }
        let (input, ri) = out.pop().expect("two operators");
        let (drift, rd) = out.pop().expect("two operators");
        Ok(Operators {
            drift,
            input,
            reports: Some((rd, ri)),
        })
    }

    pub fn load_operators(&self) -> Result<Operators> {
        let load = |label: &str| -> Result<OperatorApprox> {
            let mp = self.path(&format!("operator_{label}.meta"));
            let meta = Sidecar::read(&mp).map_err(missing("fit"))?;
            self.check_hash(&meta, &mp)?;
            let p_hat = read_matrix(&self.path(&format!("operator_{label}.pfnavmat")))?;
            Ok(OperatorApprox::from_p_hat(
                p_hat,
                meta.req(&mp, "dt")?,
                meta.req(&mp, "fit_residual")?,
            ))
        };
        Ok(Operators {
            drift: load("drift")?,
            input: load("input")?,
            reports: None,
        })
    }

    fn check_hash(&self, meta: &Sidecar, path: &Path) -> Result<()> {
        let h: String = meta.req(path, "basis_hash")?;
        if h != self.basis.hash() {
            return Err(Error::Format {
                path: path.into(),
                msg: "basis hash does not match the config basis".into(),
            });
        }
        Ok(())
    }

    /// Projects `h₀`, `p` and the mass matrix onto the basis.
    pub fn problem(&self, ops: &Operators) -> Result<SafetyProblem> {
        let s = &self.cfg.synthesis;
        let quad = QuadGrid::uniform(&self.domain, s.quad_resolution);
        let x0 = &self.cfg.sets.x0;
        let inside = quad.points().iter().filter(|x| x0.contains(x)).count();
        if inside == 0 {
            return Err(Error::stage("problem")(Error::ZeroVolume));
        }
        let level = 1.0 / (inside as f64 * quad.cell_volume());
        let h0 = move |x: &[f64]| if x0.contains(x) { level } else { 0.0 };
        let ridge = s.ridge;
        let m = self
            .basis
            .project_density(
                &h0,
                &quad,
                &ProjectOptions {
                    ridge,
                    nonneg: true,
                },
                Role::Initial,
            )
            .map_err(Error::stage("problem"))?;
        let hz = &self.hazard;
        let p = move |x: &[f64]| hz.eval_p(x);
        let u = self
            .basis
            .project_density(
                &p,
                &quad,
                &ProjectOptions {
                    ridge,
                    nonneg: false,
                },
                Role::Hazard,
            )
            .map_err(Error::stage("problem"))?;
        let x1 = self.target(self.cfg.delta()).complement();
        let d = self
            .basis
            .mass_matrix_d(&x1, &quad)
            .map_err(Error::stage("problem"))?;
        let absorb = s.absorb_radius.unwrap_or(0.75 * self.spacing);
        let absorbing = self.basis.centers_within(&self.cfg.sets.x_r, absorb);
        let mvec = m.coef.coef;
        let equality_tol = s.equality_tol_factor * mvec.amax() * mvec.len() as f64;
        let problem = SafetyProblem {
            m0: ops.drift.m_gen.clone(),
            m1: ops.input.m_gen.clone(),
            m: mvec,
            d,
            u: u.coef.coef,
            gamma: s.gamma,
            input_bound: s.input_bound,
            equality_tol,
            absorbing,
        };
        problem.check().map_err(Error::stage("problem"))?;
        self.ensure_out()?;
        write_matrix(&self.path("problem_m0.pfnavmat"), &problem.m0)?;
        write_matrix(&self.path("problem_m1.pfnavmat"), &problem.m1)?;
        write_matrix(&self.path("problem_d.pfnavmat"), &problem.d)?;
        let n = problem.len();
        write_matrix(
            &self.path("problem_vectors.pfnavmat"),
            &DMatrix::from_fn(
                n,
                2,
                |i, j| if j == 0 { problem.m[i] } else { problem.u[i] },
            ),
        )?;
        let mut meta = self.meta();
        meta.set("n", n)
            .set("gamma", problem.gamma)
            .set("input_bound", problem.input_bound)
            .set("equality_tol", problem.equality_tol)
            .set_list("absorbing", &problem.absorbing)
            .set("h0_rel_residual", m.rel_residual)
            .set("h0_clipped", m.clipped)
            .set("p_rel_residual", u.rel_residual);
        meta.write(&self.path("problem.meta"))?;
        Ok(problem)
    }

    pub fn load_problem(&self) -> Result<SafetyProblem> {
        let mp = self.path("problem.meta");
        let meta = Sidecar::read(&mp).map_err(missing("synthesize"))?;
        self.check_hash(&meta, &mp)?;
        let vecs = read_matrix(&self.path("problem_vectors.pfnavmat"))?;
        Ok(SafetyProblem {
            m0: read_matrix(&self.path("problem_m0.pfnavmat"))?,
            m1: read_matrix(&self.path("problem_m1.pfnavmat"))?,
            m: vecs.column(0).into_owned(),
            d: read_matrix(&self.path("problem_d.pfnavmat"))?,
            u: vecs.column(1).into_owned(),
            gamma: meta.req(&mp, "gamma")?,
            input_bound: meta.req(&mp, "input_bound")?,
            equality_tol: meta.req(&mp, "equality_tol")?,
            absorbing: meta.req_list(&mp, "absorbing")?,
        })
    }

    /// Solves the LP and, when a density pair exists, writes it together with the controller bundle.
    pub fn synthesize(
        &self,
        problem: &SafetyProblem,
    ) -> Result<(Synthesis, Option<NavigationController>)> {
        let s = &self.cfg.synthesis;
        let started = std::time::Instant::now();
        let opts = LpOptions {
            tol: s.lp_tol,
            max_iter: s.lp_max_iter,
            ..LpOptions::default()
        };
        let result = synthesize(problem, &opts).map_err(Error::stage("synthesize"))?;
        log::info!("LP solved in {:.1?}", started.elapsed());
        let mut meta = self.meta();
        meta.set("feasible", result.is_feasible())
            .set("best_gamma", result.best_gamma())
            .set("gamma", problem.gamma);
        if let Synthesis::Infeasible {
            min_residual: Some(r),
            ..
        } = &result
        {
            meta.set("min_residual", r);
        }
        self.ensure_out()?;
        let ctrl = match result.pair() {
            Some(pair) => {
                let n = pair.v.len();
                write_matrix(
                    &self.path("density_pair.pfnavmat"),
                    &DMatrix::from_fn(n, 2, |i, j| if j == 0 { pair.v[i] } else { pair.w[i] }),
                )?;
                meta.set("residual_eq", pair.residual_eq)
                    .set("hazard_value", pair.hazard_value)
                    .set("lp_iterations", pair.lp_iterations);
                let c = self.controller(pair.clone())?;
                self.save_controller(&c)?;
                Some(c)
            }
            None => None,
        };
        meta.write(&self.path("density_pair.meta"))?;
        Ok((result, ctrl))
    }

    pub fn load_pair(&self) -> Result<DensityPair> {
        let mp = self.path("density_pair.meta");
        let meta = Sidecar::read(&mp).map_err(missing("synthesize"))?;
        self.check_hash(&meta, &mp)?;
        let m = read_matrix(&self.path("density_pair.pfnavmat"))?;
        Ok(DensityPair {
            v: m.column(0).into_owned(),
            w: m.column(1).into_owned(),
            residual_eq: meta.req(&mp, "residual_eq")?,
            hazard_value: meta.req(&mp, "hazard_value")?,
            lp_iterations: meta.req(&mp, "lp_iterations")?,
        })
    }

    /// LQR on the linearization at `x_r`, then the density controller around it.
    pub fn controller(&self, pair: DensityPair) -> Result<NavigationController> {
        let x_r = &self.cfg.sets.x_r;
        let (a, b) = linearize(&self.f, &self.g, x_r).map_err(Error::stage("controller"))?;
        let n = a.nrows();
        let q = if self.cfg.lqr.q.is_empty() {
            DMatrix::identity(n, n)
        } else {
            DMatrix::from_diagonal(&DVector::from_column_slice(&self.cfg.lqr.q))
        };
        let r = DMatrix::from_element(1, 1, self.cfg.lqr.r);
        let lqr = lqr_gain(&a, &b, &q, &r).map_err(Error::stage("controller"))?;
        let gain: Vec<f64> = lqr.k.row(0).iter().copied().collect();
        NavigationController::new(
            self.basis.clone(),
            pair,
            self.cfg.synthesis.input_bound,
            x_r.clone(),
            self.cfg.sets.epsilon_l,
            gain,
        )
        .map_err(Error::stage("controller"))
    }

    fn save_controller(&self, c: &NavigationController) -> Result<()> {
        c.save(&self.out)?;
        let mp = self.path(BUNDLE_META);
        let mut meta = Sidecar::read(&mp)?;
        meta.set("config_hash", self.cfg.hash());
        meta.write(&mp)
    }

    /// Loads the bundle and refuses it unless its basis matches the config's.
    pub fn load_controller(&self) -> Result<NavigationController> {
        let mp = self.path(BUNDLE_META);
        if !mp.exists() {
            return Err(missing("synthesize")(Error::Format {
                path: mp,
                msg: "no controller bundle".into(),
            }));
        }
        let c = NavigationController::load(&self.out)?;
        if c.basis().hash() != self.basis.hash() {
            return Err(Error::Dimension(format!(
                "controller bundle basis ({} functions, hash {}) does not match the config basis ({} functions, hash {})",
                c.basis().len(),
                &c.basis().hash()[..12],
                self.basis.len(),
                &self.basis.hash()[..12]
            )));
        }
        Ok(c)
    }

    /// Closed- and open-loop runs from seeded samples of `X₀`.
    pub fn simulate(&self, ctrl: &NavigationController) -> Result<Vec<TrajectoryRecord>> {
        self.ensure_out()?;
        let sim = &self.cfg.simulation;
        let dt = self.cfg.dynamics.dt;
        let x0s = self
            .x0
            .draw(sim.n_trajectories, self.cfg.sub_seed("trajectories"))
            .map_err(Error::stage("simulate"))?;
        let stop = self.target(self.cfg.sets.epsilon_l);
        let policy = Arc::new(ctrl.clone()).policy();
        let mut records = Vec::new();
        let dim = self.domain.dim();
        let mut summary = String::from("index,loop");
        for i in 1..=dim {
            summary.push_str(&format!(",x0_{i}"));
        }
        summary.push_str(",end,t_end,closest_approach");
        for k in 1..=self.cfg.hazard.len() {
            summary.push_str(&format!(",occupancy_{k}"));
        }
        summary.push('\n');
        for (k, x0) in x0s.iter().enumerate() {
            let closed = simulate_controlled(
                &self.f,
                &self.g,
                policy.clone(),
                x0,
                sim.t_final,
                dt,
                Some(&stop),
            )
            .map_err(Error::stage("simulate"))?;
            let open = simulate(&self.f, x0, sim.t_final, dt, Some(&stop))
                .map_err(Error::stage("simulate"))?;
            closed.write_csv(&self.path(&format!("closed_loop_{k:02}.csv")))?;
            open.write_csv(&self.path(&format!("open_loop_{k:02}.csv")))?;
            for (label, tr) in [("closed", &closed), ("open", &open)] {
                summary.push_str(&format!("{k},{label}"));
                for v in x0 {
                    summary.push_str(&format!(",{}", sig15(*v)));
                }
                summary.push_str(&format!(
                    ",{},{},{}",
                    tr.end.as_str(),
                    sig15(tr.duration()),
                    sig15(tr.closest_approach(&self.cfg.sets.x_r))
                ));
                for r in self.hazard.regions() {
                    summary.push_str(&format!(",{}", sig15(occupancy_fraction(tr, r))));
                }
                summary.push('\n');
            }
            records.push(TrajectoryRecord { closed, open });
        }
        let p = self.path("trajectories.csv");
        std::fs::write(&p, summary).map_err(|e| Error::io(p, e))?;
        Ok(records)
    }

    /// Monte Carlo collision estimate next to the convex bound `uᵀDv`.
    pub fn evaluate(&self, ctrl: &NavigationController) -> Result<McReport> {
        self.ensure_out()?;
        let mc = &self.cfg.mc;
        let opts = McOptions {
            horizon: mc.horizon,
            dt: self.cfg.mc_dt(),
            n_samples: mc.n_samples,
            seed: self.cfg.sub_seed("mc"),
            target: Some(self.target(self.cfg.delta())),
        };
        let field = VectorField::closed_loop(&self.f, &self.g, Arc::new(ctrl.clone()).policy());
        let report = collision_probability_mc(&field, &self.x0, &self.hazard, &opts)
            .map_err(Error::stage("eval"))?;
        let mut meta = self.meta();
        meta.set("estimate", sig15(report.estimate))
            .set("stderr", sig15(report.stderr))
            .set("hazard_bound", sig15(ctrl.pair().hazard_value))
            .set("gamma", self.cfg.synthesis.gamma)
            .set("tail_fraction", sig15(report.tail_fraction))
            .set("exit_fraction", sig15(report.exit_fraction))
            .set("n_samples", mc.n_samples)
            .set("horizon", mc.horizon)
            .set("dt", opts.dt)
            .set("seed", self.cfg.seed)
            .set("mc_seed", opts.seed);
        meta.write(&self.path("mc_report.txt"))?;
        report.write_samples_csv(&self.path("mc_samples.csv"))?;
        Ok(report)
    }

    /// `ρ = Ψᵀv` at the cell midpoints of a `res`-per-axis grid over the domain.
    pub fn density_grid(
        &self,
        ctrl: &NavigationController,
        res: usize,
    ) -> Result<Vec<(Vec<f64>, f64)>> {
        self.ensure_out()?;
        let dim = self.domain.dim();
        let res_v = vec![res; dim];
        let rows: Vec<(Vec<f64>, f64)> = midpoints(&self.domain, &res_v)
            .map(|x| {
                let r = ctrl.rho(&x);
                (x, r)
            })
            .collect();
        let mut s: String = (1..=dim).map(|i| format!("x{i},")).collect();
        s.push_str("rho\n");
        for (x, r) in &rows {
            for v in x {
                s.push_str(&sig15(*v));
                s.push(',');
            }
            s.push_str(&sig15(*r));
            s.push('\n');
        }
        let p = self.path("density_grid.csv");
        std::fs::write(&p, s).map_err(|e| Error::io(p, e))?;
        Ok(rows)
    }

    /// Runs every stage. Downstream stages still run on an infeasible result
    /// when the LP produced a density pair.
    pub fn run(&self) -> Result<Summary> {
        self.write_config()?;
        let snaps = self.snapshots()?;
        let ops = self.fit(&snaps)?;
        let problem = self.problem(&ops)?;
        let (synthesis, ctrl) = self.synthesize(&problem)?;
        let Some(ctrl) = ctrl else {
            return Ok(Summary {
                synthesis,
                mc: None,
            });
        };
        self.simulate(&ctrl)?;
        let mc = self.evaluate(&ctrl)?;
        self.density_grid(&ctrl, self.cfg.density_grid)?;
        Ok(Summary {
            synthesis,
            mc: Some(mc),
        })
    }
}

fn missing(stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Io { path, .. } => Error::Format {
            path,
            msg: format!("missing; run `{stage}` first"),
        },
        other => other,
    }
}
