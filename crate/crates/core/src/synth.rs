//! Synthetic trajectory generator with analytic ground truth. Every other
//! module is verified against corpora produced here: periodic kinds have an
//! exact repetition count of frequency x duration, walks have none.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{MotionTrajectory, Point};

/// Motion archetypes. The first five are exercises; the walks are the
/// confounders (gait and drift are periodic-ish or high-displacement).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    SinusoidX,
    SinusoidY,
    Circle,
    FigureEight,
    BounceDrift,
    RandomWalk,
    LinearWalk,
}

impl MotionKind {
    pub const EXERCISE_KINDS: [MotionKind; 5] = [
        MotionKind::SinusoidX,
        MotionKind::SinusoidY,
        MotionKind::Circle,
        MotionKind::FigureEight,
        MotionKind::BounceDrift,
    ];

    pub const WALK_KINDS: [MotionKind; 2] = [MotionKind::RandomWalk, MotionKind::LinearWalk];

    pub fn is_exercise(&self) -> bool {
        !matches!(self, MotionKind::RandomWalk | MotionKind::LinearWalk)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MotionKind::SinusoidX => "sinusoid_x",
            MotionKind::SinusoidY => "sinusoid_y",
            MotionKind::Circle => "circle",
            MotionKind::FigureEight => "figure_eight",
            MotionKind::BounceDrift => "bounce_drift",
            MotionKind::RandomWalk => "random_walk",
            MotionKind::LinearWalk => "linear_walk",
        }
    }

    pub fn from_name(name: &str) -> Option<MotionKind> {
        Some(match name {
            "sinusoid_x" => MotionKind::SinusoidX,
            "sinusoid_y" => MotionKind::SinusoidY,
            "circle" => MotionKind::Circle,
            "figure_eight" => MotionKind::FigureEight,
            "bounce_drift" => MotionKind::BounceDrift,
            "random_walk" => MotionKind::RandomWalk,
            "linear_walk" => MotionKind::LinearWalk,
            _ => return None,
        })
    }
}

/// Everything needed to generate one trajectory deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: MotionKind,
    pub frequency_hz: f64,
    pub amplitude_px: f64,
    pub duration_s: f64,
    pub fps: f64,
    pub phase_deg: f64,
    pub noise_std_px: f64,
    /// Drift speed for the drifting kinds; for walks it sets the step scale
    /// when nonzero (otherwise the step scale matches a sinusoid of the same
    /// frequency and amplitude).
    pub drift_velocity_px_s: f64,
    pub center: (f64, f64),
    pub seed: u64,
    /// First frame of the emitted trajectory.
    pub start_frame: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: MotionKind::SinusoidX,
            frequency_hz: 1.0,
            amplitude_px: 50.0,
            duration_s: 8.0,
            fps: 30.0,
            phase_deg: 0.0,
            noise_std_px: 0.0,
            drift_velocity_px_s: 0.0,
            center: (320.0, 240.0),
            seed: 0,
            start_frame: 0,
        }
    }
}

/// Analytic ground truth paired with a generated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub is_exercise: bool,
    /// frequency x duration for periodic kinds, 0 for walks.
    pub reps: f64,
    pub class: MotionKind,
    pub phase_deg: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Generates one trajectory plus its ground truth. Deterministic per seed.
pub fn generate(spec: &SynthSpec) -> Result<(MotionTrajectory, SynthTruth), SynthError> {
    if !(spec.fps > 0.0 && spec.duration_s > 0.0) {
        return Err(SynthError::InvalidSpec("fps and duration must be positive".into()));
    }
    if spec.kind.is_exercise() && !(spec.frequency_hz > 0.0) {
        return Err(SynthError::InvalidSpec("periodic kinds need a positive frequency".into()));
    }
    let n = (spec.duration_s * spec.fps).round() as usize;
    if n == 0 {
        return Err(SynthError::InvalidSpec("duration too short for one sample".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std_px.max(0.0))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let phase = spec.phase_deg.to_radians();
    let omega = 2.0 * std::f64::consts::PI * spec.frequency_hz;
    let (cx, cy) = spec.center;

    let mut points = Vec::with_capacity(n);
    // Walk state.
    let step_scale = if spec.drift_velocity_px_s > 0.0 {
        spec.drift_velocity_px_s / spec.fps
    } else {
        // Match the peak per-frame speed of the equivalent sinusoid.
        spec.amplitude_px * omega / spec.fps
    };
    let walk_heading: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let (mut wx, mut wy) = (cx, cy);

    for i in 0..n {
        let t = i as f64 / spec.fps;
        let theta = omega * t + phase;
        let base = match spec.kind {
            MotionKind::SinusoidX => Point::new(cx + spec.amplitude_px * theta.sin(), cy),
            MotionKind::SinusoidY => Point::new(cx, cy + spec.amplitude_px * theta.sin()),
            MotionKind::Circle => Point::new(
                cx + spec.amplitude_px * theta.cos(),
                cy + spec.amplitude_px * theta.sin(),
            ),
            MotionKind::FigureEight => Point::new(
                cx + spec.amplitude_px * theta.sin(),
                cy + 0.5 * spec.amplitude_px * (2.0 * theta).sin(),
            ),
            MotionKind::BounceDrift => {
                // Mild drift: the bounce must stay the dominant motion of a
                // 5 s window or the kind degenerates into a walk.
                let drift = if spec.drift_velocity_px_s > 0.0 {
                    spec.drift_velocity_px_s
                } else {
                    0.1 * spec.amplitude_px
                };
                Point::new(cx + drift * t, cy + spec.amplitude_px * theta.sin().abs())
            }
            MotionKind::RandomWalk => {
                if i > 0 {
                    wx += step_scale * sample_normal(&mut rng);
                    wy += step_scale * sample_normal(&mut rng);
                }
                Point::new(wx, wy)
            }
            MotionKind::LinearWalk => Point::new(
                cx + step_scale * spec.fps * t * walk_heading.cos(),
                cy + step_scale * spec.fps * t * walk_heading.sin(),
            ),
        };
        let p = if spec.noise_std_px > 0.0 {
            Point::new(base.x + noise.sample(&mut rng), base.y + noise.sample(&mut rng))
        } else {
            base
        };
        points.push(p);
    }

    let id = format!("{}-{:016x}", spec.kind.name(), spec.seed);
    let trajectory = MotionTrajectory::new(id, spec.fps, spec.start_frame, points)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let truth = SynthTruth {
        is_exercise: spec.kind.is_exercise(),
        reps: if spec.kind.is_exercise() {
            spec.frequency_hz * spec.duration_s
        } else {
            0.0
        },
        class: spec.kind,
        phase_deg: spec.phase_deg,
    };
    Ok((trajectory, truth))
}

fn sample_normal(rng: &mut ChaCha20Rng) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    n.sample(rng)
}

/// One labeled item of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub trajectory: MotionTrajectory,
    pub truth: SynthTruth,
}

/// A labeled corpus with a deterministic stratified train/test split.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stratified split: within each class the first `1 - test_fraction` of
    /// a seeded shuffle goes to training. Returns (train, test) index sets,
    /// disjoint and jointly exhaustive.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        use rand::seq::SliceRandom;
        assert!((0.0..1.0).contains(&test_fraction));
        let mut by_class: std::collections::BTreeMap<MotionKind, Vec<usize>> = Default::default();
        for (i, item) in self.items.iter().enumerate() {
            by_class.entry(item.truth.class).or_default().push(i);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (_, mut indices) in by_class {
            indices.shuffle(&mut rng);
            let n_test = (indices.len() as f64 * test_fraction).round() as usize;
            let split_at = indices.len() - n_test;
            train.extend_from_slice(&indices[..split_at]);
            test.extend_from_slice(&indices[split_at..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }
}

/// Parameter ranges for corpus generation; each item draws uniformly from
/// these, with its own seed derived from the corpus seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub kinds: Vec<MotionKind>,
    pub n_per_kind: usize,
    pub frequency_hz: (f64, f64),
    pub amplitude_px: (f64, f64),
    pub duration_s: (f64, f64),
    pub fps: f64,
    /// Noise standard deviation as a fraction of the amplitude.
    pub noise_frac: (f64, f64),
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            kinds: MotionKind::EXERCISE_KINDS.to_vec(),
            n_per_kind: 100,
            frequency_hz: (0.4, 2.0),
            amplitude_px: (30.0, 80.0),
            duration_s: (5.0, 11.0),
            fps: 30.0,
            noise_frac: (0.01, 0.05),
            seed: 0,
        }
    }
}

/// Generates a balanced labeled corpus: `n_per_kind` trajectories per kind,
/// reproducible bit-exactly from the `CorpusSpec`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, SynthError> {
    let mut items = Vec::with_capacity(spec.kinds.len() * spec.n_per_kind);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    for &kind in &spec.kinds {
        for _ in 0..spec.n_per_kind {
            let frequency_hz = draw(&mut rng, spec.frequency_hz);
            let amplitude_px = draw(&mut rng, spec.amplitude_px);
            let duration_s = draw(&mut rng, spec.duration_s);
            let noise_frac = draw(&mut rng, spec.noise_frac);
            let item_seed: u64 = rng.random();
            let phase_deg = rng.random_range(0.0..360.0);
            let one = SynthSpec {
                kind,
                frequency_hz,
                amplitude_px,
                duration_s,
                fps: spec.fps,
                phase_deg,
                noise_std_px: noise_frac * amplitude_px,
                drift_velocity_px_s: 0.0,
                center: (320.0, 240.0),
                seed: item_seed,
                start_frame: 0,
            };
            let (trajectory, truth) = generate(&one)?;
            items.push(CorpusItem { trajectory, truth });
        }
    }
    Ok(Corpus { items })
}

fn draw(rng: &mut ChaCha20Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{self, Signal1D};

    #[test]
    fn sinusoid_truth_is_frequency_times_duration() {
        let spec = SynthSpec {
            kind: MotionKind::SinusoidX,
            frequency_hz: 1.0,
            duration_s: 8.0,
            ..SynthSpec::default()
        };
        let (t, truth) = generate(&spec).unwrap();
        assert_eq!(truth.reps, 8.0);
        assert!(truth.is_exercise);
        assert_eq!(t.len(), 240);
    }

    #[test]
    fn walks_are_not_exercises() {
        for kind in MotionKind::WALK_KINDS {
            let spec = SynthSpec { kind, seed: 9, ..SynthSpec::default() };
            let (_, truth) = generate(&spec).unwrap();
            assert!(!truth.is_exercise);
            assert_eq!(truth.reps, 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = SynthSpec {
            kind: MotionKind::RandomWalk,
            noise_std_px: 2.0,
            seed: 1234,
            ..SynthSpec::default()
        };
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_circle_dominant_frequency_matches_dft_oracle() {
        let spec = SynthSpec {
            kind: MotionKind::Circle,
            frequency_hz: 0.5,
            amplitude_px: 50.0,
            noise_std_px: 2.0,
            duration_s: 10.0,
            seed: 5,
            ..SynthSpec::default()
        };
        let (t, _) = generate(&spec).unwrap();
        let xs = Signal1D::new(t.fps, t.points.iter().map(|p| p.x).collect());
        let dom = dsp::dominant_frequency(&xs).unwrap();
        assert!((dom.hz - 0.5).abs() <= 0.2, "got {}", dom.hz);
    }

    #[test]
    fn sinusoid_zero_crossings_match_analytic_count() {
        for seed in 0..20 {
            let spec = SynthSpec {
                kind: MotionKind::SinusoidY,
                frequency_hz: 1.5,
                duration_s: 6.0,
                phase_deg: seed as f64 * 17.0,
                noise_std_px: 0.0,
                seed,
                ..SynthSpec::default()
            };
            let (t, _) = generate(&spec).unwrap();
            let ys = Signal1D::new(t.fps, t.points.iter().map(|p| p.y).collect());
            let zc = dsp::zero_crossings(&ys).count as f64;
            let expected = 2.0 * 1.5 * 6.0;
            assert!((zc - expected).abs() <= 1.0, "seed {seed}: {zc} vs {expected}");
        }
    }

    #[test]
    fn corpus_is_balanced_and_reproducible() {
        let spec = CorpusSpec {
            kinds: vec![MotionKind::SinusoidX, MotionKind::RandomWalk],
            n_per_kind: 200,
            seed: 77,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.len(), 400);
        let exercises = corpus.items.iter().filter(|i| i.truth.is_exercise).count();
        assert_eq!(exercises, 200);

        let again = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.items, again.items);
    }

    #[test]
    fn stratified_split_is_disjoint_and_sized() {
        let spec = CorpusSpec {
            kinds: MotionKind::EXERCISE_KINDS.to_vec(),
            n_per_kind: 100,
            seed: 3,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.len(), 500);
        let (train, test) = corpus.split(0.2, 3);
        assert_eq!(train.len(), 400);
        assert_eq!(test.len(), 100);
        let overlap = train.iter().filter(|i| test.contains(i)).count();
        assert_eq!(overlap, 0);
        // Stratification: exactly 20 held-out per class.
        for kind in MotionKind::EXERCISE_KINDS {
            let held = test
                .iter()
                .filter(|&&i| corpus.items[i].truth.class == kind)
                .count();
            assert_eq!(held, 20, "{kind:?}");
        }
    }
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

/// One exercise in a scene: a physical motion that several tracked keypoints
/// observe, each keypoint living at most the tracker lifespan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneExercise {
    pub kind: MotionKind,
    pub frequency_hz: f64,
    pub amplitude_px: f64,
    pub phase_deg: f64,
    pub center: (f64, f64),
    pub box_id: u32,
    pub start_s: f64,
    pub duration_s: f64,
    pub keypoints: usize,
}

/// A non-exercise wanderer in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWalk {
    pub kind: MotionKind,
    pub center: (f64, f64),
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub fps: f64,
    /// Keypoint lifespan range in seconds; also the tracker cap.
    pub lifespan_s: (f64, f64),
    /// New keypoints spawn on the same motion every this many seconds.
    pub respawn_s: (f64, f64),
    pub noise_std_px: f64,
    pub exercises: Vec<SceneExercise>,
    pub walks: Vec<SceneWalk>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            fps: 30.0,
            lifespan_s: (8.0, 11.0),
            respawn_s: (1.0, 2.5),
            noise_std_px: 1.0,
            exercises: Vec::new(),
            walks: Vec::new(),
            seed: 0,
        }
    }
}

/// Exercise-level ground truth of a scene (one entry per exercise, not per
/// keypoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseTruth {
    pub box_id: u32,
    pub class: MotionKind,
    pub start_frame: i64,
    pub end_frame: i64,
    pub reps: f64,
}

/// Per-trajectory truth for detection evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTruth {
    pub id: String,
    pub class: MotionKind,
    pub start_frame: i64,
    pub end_frame: i64,
    pub reps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub trajectories: Vec<MotionTrajectory>,
    pub trajectory_truths: Vec<TrajectoryTruth>,
    pub exercise_truths: Vec<ExerciseTruth>,
}

/// Generates a full scene: every exercise spawns staggered keypoints that
/// share its phase (tracking the same physical motion), walks wander on
/// their own. Deterministic per seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut scene = Scene::default();
    let mut serial = 0usize;

    for exercise in &spec.exercises {
        let ex_start_frame = (exercise.start_s * spec.fps).round() as i64;
        let ex_end_s = exercise.start_s + exercise.duration_s;
        let mut spawn_s = exercise.start_s;
        let mut spawned = 0usize;
        while spawned < exercise.keypoints {
            let remaining = ex_end_s - spawn_s;
            if remaining < 2.0 {
                // Wrap around: further keypoints start back at the beginning
                // with a fresh stagger.
                spawn_s = exercise.start_s + draw(&mut rng, (0.0, 1.0));
                continue;
            }
            let lifespan = draw(&mut rng, spec.lifespan_s).min(remaining);
            let start_frame = (spawn_s * spec.fps).round() as i64;
            // Keypoints sample the same physical oscillation; their local
            // phase advances with the spawn time.
            let phase_deg = exercise.phase_deg
                + 360.0 * exercise.frequency_hz * start_frame as f64 / spec.fps;
            // Keypoints of one exercise track the same moving part, so they
            // sit within a few pixels of each other.
            let offset = (
                draw(&mut rng, (-8.0, 8.0)),
                draw(&mut rng, (-8.0, 8.0)),
            );
            let one = SynthSpec {
                kind: exercise.kind,
                frequency_hz: exercise.frequency_hz,
                amplitude_px: exercise.amplitude_px * draw(&mut rng, (0.8, 1.0)),
                duration_s: lifespan,
                fps: spec.fps,
                phase_deg,
                noise_std_px: spec.noise_std_px,
                drift_velocity_px_s: 0.0,
                center: (exercise.center.0 + offset.0, exercise.center.1 + offset.1),
                seed: rng.random(),
                start_frame,
            };
            let (mut trajectory, _) = generate(&one)?;
            trajectory.id = format!("kp{:04}-{}", serial, trajectory.id);
            serial += 1;
            scene.trajectory_truths.push(TrajectoryTruth {
                id: trajectory.id.clone(),
                class: exercise.kind,
                start_frame: trajectory.start_frame,
                end_frame: trajectory.end_frame(),
                reps: exercise.frequency_hz * lifespan,
            });
            scene.trajectories.push(trajectory);
            spawned += 1;
            spawn_s += draw(&mut rng, spec.respawn_s);
        }
        scene.exercise_truths.push(ExerciseTruth {
            box_id: exercise.box_id,
            class: exercise.kind,
            start_frame: ex_start_frame,
            end_frame: (ex_end_s * spec.fps).round() as i64 - 1,
            reps: exercise.frequency_hz * exercise.duration_s,
        });
    }

    for walk in &spec.walks {
        let start_frame = (walk.start_s * spec.fps).round() as i64;
        let one = SynthSpec {
            kind: walk.kind,
            frequency_hz: 0.8,
            amplitude_px: 40.0,
            duration_s: walk.duration_s,
            fps: spec.fps,
            phase_deg: 0.0,
            noise_std_px: spec.noise_std_px,
            drift_velocity_px_s: 0.0,
            center: walk.center,
            seed: rng.random(),
            start_frame,
        };
        let (mut trajectory, _) = generate(&one)?;
        trajectory.id = format!("kp{:04}-{}", serial, trajectory.id);
        serial += 1;
        scene.trajectory_truths.push(TrajectoryTruth {
            id: trajectory.id.clone(),
            class: walk.kind,
            start_frame: trajectory.start_frame,
            end_frame: trajectory.end_frame(),
            reps: 0.0,
        });
        scene.trajectories.push(trajectory);
    }

    Ok(scene)
}
