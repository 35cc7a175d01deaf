//! Greedy closed-loop pushing against the simulator.

use std::fmt;

use crate::control::{greedy_over, lyapunov_image, lyapunov_particles, DistanceField, Predictor};
use crate::error::Result;
use crate::foresight::{
    action_seed, particles_from_image, predict_linear, rasterize_particles, transport_predict, SwitchedLinearModel, TransportModel,
};
use crate::geometry::Action;
use crate::imaging::{frobenius_distance, Image};
use crate::simulator::{apply_push, push_touches, rasterize, Scene, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutStatus {
    Converged,
    MaxSteps,
    Stalled,
}

impl RolloutStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxSteps => "max_steps",
            Self::Stalled => "stalled",
        }
    }
}

impl fmt::Display for RolloutStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStep {
    /// 1-based push index.
    pub step: usize,
    pub action: Action<f64>,
    pub v_pred: f64,
    pub v_real: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutLog {
    pub v_initial: f64,
    pub steps: Vec<RolloutStep>,
    pub status: RolloutStatus,
    /// Rasterized frames, initial first; empty unless requested.
    pub frames: Vec<Image<f64>>,
    pub final_scene: Scene,
}

impl RolloutLog {
    pub fn final_v(&self) -> f64 {
        self.steps.last().map_or(self.v_initial, |s| s.v_real)
    }

    pub fn converged(&self) -> bool {
        self.status == RolloutStatus::Converged
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutConfig {
    pub max_steps: usize,
    pub v_stop: f64,
    /// Consecutive unchanged frames before giving up.
    pub stall_steps: usize,
    pub stall_tol: f64,
    pub resolution: usize,
    pub record_frames: bool,
    /// Pixels brighter than this become particles for the transport planner.
    pub particle_threshold: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_steps: 40,
            v_stop: 0.02,
            stall_steps: 3,
            stall_tol: 1e-6,
            resolution: 32,
            record_frames: false,
            particle_threshold: 0.25,
        }
    }
}

/// Which model the controller plans with.
#[derive(Clone, Copy, Debug)]
pub enum ControlModel<'a> {
    Linear(&'a SwitchedLinearModel<f64>),
    Transport(&'a TransportModel<f64>),
    /// The simulator itself.
    Oracle,
}

pub struct LinearPredictor<'a>(pub &'a SwitchedLinearModel<f64>);

impl Predictor<f64> for LinearPredictor<'_> {
    fn predict(&self, img: &Image<f64>, a: &Action<f64>) -> Result<Image<f64>> {
        predict_linear(self.0, img, a)
    }
}

/// Transport model scored with the particle Lyapunov function.
pub struct TransportPredictor<'a> {
    pub model: &'a TransportModel<f64>,
    pub threshold: f64,
}

impl TransportPredictor<'_> {
    fn particles(&self, img: &Image<f64>) -> crate::foresight::ParticleSet<f64> {
        let parts = particles_from_image(img, self.threshold);
        if parts.is_empty() {
            particles_from_image(img, 0.0)
        } else {
            parts
        }
    }
}

impl Predictor<f64> for TransportPredictor<'_> {
    fn predict(&self, img: &Image<f64>, a: &Action<f64>) -> Result<Image<f64>> {
        let moved = transport_predict(self.model, &self.particles(img), a, action_seed(a));
        Ok(rasterize_particles(&moved, img.n()))
    }

    fn predicted_value(&self, f: &DistanceField<f64>, img: &Image<f64>, a: &Action<f64>) -> Result<f64> {
        let moved = transport_predict(self.model, &self.particles(img), a, action_seed(a));
        lyapunov_particles(f, &moved)
    }
}

/// Simulates each candidate push on a copy of the true scene.
pub struct OraclePredictor<'a> {
    pub scene: &'a Scene,
    pub sim: &'a SimConfig,
}

impl Predictor<f64> for OraclePredictor<'_> {
    fn predict(&self, img: &Image<f64>, a: &Action<f64>) -> Result<Image<f64>> {
        if !push_touches(self.scene, a, self.sim) {
            return Ok(img.clone());
        }
        Ok(rasterize(&apply_push(self.scene, a, self.sim), img.n(), self.sim.supersample))
    }

    fn predicted_value(&self, f: &DistanceField<f64>, img: &Image<f64>, a: &Action<f64>) -> Result<f64> {
        if !push_touches(self.scene, a, self.sim) {
            // untouched scenes keep the current value
            return lyapunov_image(f, img);
        }
        lyapunov_image(f, &self.predict(img, a)?)
    }
}

/// Runs the greedy controller on the true simulator until the scene is
/// within `v_stop` of the target, stalls, or runs out of steps.
pub fn rollout(
    scene: &Scene,
    model: ControlModel<'_>,
    f: &DistanceField<f64>,
    actions: &[Action<f64>],
    sim: &SimConfig,
    cfg: &RolloutConfig,
) -> Result<RolloutLog> {
    let mut scene = scene.clone();
    let mut img = rasterize(&scene, cfg.resolution, sim.supersample);
    let v_initial = lyapunov_image(f, &img)?;
    let mut v = v_initial;
    let mut frames = Vec::new();
    if cfg.record_frames {
        frames.push(img.clone());
    }
    let mut steps = Vec::new();
    let mut unchanged = 0;
    let mut status = RolloutStatus::MaxSteps;
    for step in 1..=cfg.max_steps.max(1) {
        if v <= cfg.v_stop {
            status = RolloutStatus::Converged;
            break;
        }
        let (action, v_pred) = match model {
            ControlModel::Linear(m) => greedy_over(&LinearPredictor(m), &img, f, actions)?,
            ControlModel::Transport(tm) => {
                greedy_over(&TransportPredictor { model: tm, threshold: cfg.particle_threshold }, &img, f, actions)?
            }
            ControlModel::Oracle => greedy_over(&OraclePredictor { scene: &scene, sim }, &img, f, actions)?,
        };
        scene = apply_push(&scene, &action, sim);
        let next = rasterize(&scene, cfg.resolution, sim.supersample);
        let change = frobenius_distance(&img, &next)?;
        img = next;
        v = lyapunov_image(f, &img)?;
        steps.push(RolloutStep { step, action, v_pred, v_real: v });
        if cfg.record_frames {
            frames.push(img.clone());
        }
        unchanged = if change < cfg.stall_tol { unchanged + 1 } else { 0 };
        if unchanged >= cfg.stall_steps {
            status = RolloutStatus::Stalled;
            break;
        }
    }
    if status == RolloutStatus::MaxSteps && v <= cfg.v_stop {
        status = RolloutStatus::Converged;
    }
    Ok(RolloutLog { v_initial, steps, status, frames, final_scene: scene })
}
