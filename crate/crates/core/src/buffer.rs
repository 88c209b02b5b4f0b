//! Replay buffer: rollout collection, persistence, and the pair/triplet
//! samplers that provide weak supervision.
//!
//! The buffer stores factor states rather than pixels; observations are
//! rendered on demand. Triplets (anchor, positive, negative) are confined
//! to a single episode and ordered `a < p < n` by step index — the
//! temporal sampler leans on the assumption that states closer in time
//! are on average closer in their ground-truth factors. The ground-truth
//! sampler assigns positive/negative roles from factor distances instead
//! and exists as the fully supervised sanity check.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{step, FactorState, GridAction, GridSpec};
use crate::metrics::ground_truth_distance;

const BUFFER_MAGIC: &[u8; 8] = b"GWREPLAY";
const BUFFER_VERSION: u32 = 1;

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: FactorState,
    pub action: GridAction,
    pub reward: f64,
    pub next_state: FactorState,
    pub episode_id: u32,
    /// Step index within the episode, strictly increasing.
    pub step_index: u32,
}

/// Ordered transition store. Append-only during collection, read-only
/// afterwards.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    spec: GridSpec,
    transitions: Vec<Transition>,
    /// (start, len) per episode, in insertion order.
    episodes: Vec<(usize, usize)>,
}

impl ReplayBuffer {
    pub fn new(spec: GridSpec) -> Self {
        ReplayBuffer { spec, transitions: Vec::new(), episodes: Vec::new() }
    }

    /// Build from pre-assembled transitions; validates episode grouping and
    /// step ordering.
    pub fn from_transitions(spec: GridSpec, transitions: Vec<Transition>) -> Result<Self> {
        let mut buf = ReplayBuffer::new(spec);
        for t in transitions {
            buf.push(t)?;
        }
        Ok(buf)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::Precondition("transition reward must be finite".into()));
        }
        t.state.validate(&self.spec)?;
        t.next_state.validate(&self.spec)?;
        match self.episodes.last_mut() {
            Some((start, len)) if self.transitions[*start].episode_id == t.episode_id => {
                let last = &self.transitions[*start + *len - 1];
                if t.step_index <= last.step_index {
                    return Err(Error::Precondition(format!(
                        "step_index {} not increasing within episode {}",
                        t.step_index, t.episode_id
                    )));
                }
                *len += 1;
            }
            _ => {
                if self.transitions.iter().any(|p| p.episode_id == t.episode_id) {
                    return Err(Error::Precondition(format!(
                        "episode {} is not contiguous",
                        t.episode_id
                    )));
                }
                self.episodes.push((self.transitions.len(), 1));
            }
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.transitions[index]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Transition index ranges per episode.
    pub fn episode_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.episodes.iter().map(|&(start, len)| start..start + len)
    }

    /// Serialise: magic, version, spec, counts, packed records.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BUFFER_MAGIC)?;
        w.write_all(&BUFFER_VERSION.to_le_bytes())?;
        for v in [
            self.spec.num_squares,
            self.spec.square_size_px,
            self.spec.step_px,
            self.spec.grid_cells_per_axis,
            self.spec.image_side_px,
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.transitions.len() as u64).to_le_bytes())?;
        for t in &self.transitions {
            for &(x, y) in &t.state.positions {
                w.write_all(&x.to_le_bytes())?;
                w.write_all(&y.to_le_bytes())?;
            }
            w.write_all(&(t.action.square_index as u32).to_le_bytes())?;
            w.write_all(&(t.action.direction.index() as u32).to_le_bytes())?;
            w.write_all(&t.reward.to_le_bytes())?;
            for &(x, y) in &t.next_state.positions {
                w.write_all(&x.to_le_bytes())?;
                w.write_all(&y.to_le_bytes())?;
            }
            w.write_all(&t.episode_id.to_le_bytes())?;
            w.write_all(&t.step_index.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BUFFER_MAGIC {
            return Err(Error::Format("not a replay buffer file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BUFFER_VERSION {
            return Err(Error::Format(format!("unsupported buffer version {version}")));
        }
        let num_squares = read_u32(&mut r)? as usize;
        let square_size_px = read_u32(&mut r)? as usize;
        let step_px = read_u32(&mut r)? as usize;
        let cells = read_u32(&mut r)? as usize;
        let image = read_u32(&mut r)? as usize;
        let spec = GridSpec::new(num_squares, square_size_px, step_px, cells, image)?;
        let count = read_u64(&mut r)? as usize;
        let mut transitions = Vec::with_capacity(count);
        for _ in 0..count {
            let state = read_positions(&mut r, num_squares)?;
            let square_index = read_u32(&mut r)? as usize;
            let dir_index = read_u32(&mut r)? as usize;
            let direction = crate::gridworld::Direction::from_index(dir_index)
                .ok_or_else(|| Error::Format(format!("bad direction index {dir_index}")))?;
            let reward = f64::from_le_bytes(read_array(&mut r)?);
            let next_state = read_positions(&mut r, num_squares)?;
            let episode_id = read_u32(&mut r)?;
            let step_index = read_u32(&mut r)?;
            transitions.push(Transition {
                state,
                action: GridAction::new(square_index, direction),
                reward,
                next_state,
                episode_id,
                step_index,
            });
        }
        ReplayBuffer::from_transitions(spec, transitions)
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_positions<R: Read>(r: &mut R, num_squares: usize) -> Result<FactorState> {
    let mut positions = Vec::with_capacity(num_squares);
    for _ in 0..num_squares {
        let x = read_u32(r)?;
        let y = read_u32(r)?;
        positions.push((x, y));
    }
    Ok(FactorState::new(positions))
}

/// Buffer indices of one triplet; all in the same episode with
/// `step_index(anchor) < step_index(positive) < step_index(negative)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletIndices {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// How pairs/triplets are drawn from the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Positive/negative roles from temporal ordering only.
    Temporal,
    /// Roles assigned from ground-truth factor distances (sanity check).
    GroundTruth,
    /// Plain within-episode pairs (Ada-GVAE supervision).
    UniformPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Max temporal gap anchor -> positive.
    pub max_positive_offset: usize,
    /// Max temporal gap anchor -> negative.
    pub max_negative_offset: usize,
    pub mode: SamplerMode,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_positive_offset < 1 || self.max_positive_offset >= self.max_negative_offset {
            return Err(Error::Precondition(format!(
                "need 1 <= max_positive_offset < max_negative_offset, got {} and {}",
                self.max_positive_offset, self.max_negative_offset
            )));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_positive_offset: 8,
            max_negative_offset: 32,
            mode: SamplerMode::Temporal,
        }
    }
}

const SAMPLE_RETRIES: usize = 10_000;

/// Populate a buffer by executing a uniformly random policy from the
/// all-zeros start state. Rewards are 0 (collection is task-free).
pub fn collect_random_walk(
    spec: &GridSpec,
    episodes: usize,
    steps_per_episode: usize,
    seed: u64,
) -> Result<ReplayBuffer> {
    spec.validate()?;
    if episodes == 0 || steps_per_episode == 0 {
        return Err(Error::Precondition("episodes and steps_per_episode must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = GridAction::all(spec);
    let mut buf = ReplayBuffer::new(*spec);
    for ep in 0..episodes {
        let mut state = FactorState::new(vec![(0, 0); spec.num_squares]);
        for i in 0..steps_per_episode {
            let action = actions[rng.random_range(0..actions.len())];
            let next = step(&state, action, spec)?;
            buf.push(Transition {
                state: state.clone(),
                action,
                reward: 0.0,
                next_state: next.clone(),
                episode_id: ep as u32,
                step_index: i as u32,
            })?;
            state = next;
        }
    }
    Ok(buf)
}

/// Anchor uniform over eligible positions, positive offset uniform in
/// `[1, max_positive_offset]`, negative offset uniform in
/// `(positive_offset, max_negative_offset]`, all within one episode.
pub fn sample_temporal_triplet<R: Rng>(
    buffer: &ReplayBuffer,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<TripletIndices> {
    cfg.validate()?;
    // Anchors that leave room for at least (positive, negative) = (1, 2).
    let eligible: Vec<usize> = buffer
        .episode_ranges()
        .flat_map(|range| {
            let end = range.end;
            range.filter(move |&i| i + 2 < end)
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::Sampling(
            "no episode long enough for a temporal triplet".into(),
        ));
    }
    let anchor = eligible[rng.random_range(0..eligible.len())];
    let episode_end = buffer
        .episode_ranges()
        .find(|r| r.contains(&anchor))
        .expect("anchor came from an episode")
        .end;
    let room = episode_end - anchor - 1;
    let max_pos = cfg.max_positive_offset.min(room - 1);
    let pos_offset = rng.random_range(1..=max_pos);
    let max_neg = cfg.max_negative_offset.min(room);
    let neg_offset = rng.random_range(pos_offset + 1..=max_neg);
    Ok(TripletIndices {
        anchor,
        positive: anchor + pos_offset,
        negative: anchor + neg_offset,
    })
}

/// Draw three distinct indices, then assign positive/negative so that the
/// anchor-positive factor distance is strictly below anchor-negative;
/// redraws on ties.
pub fn sample_ground_truth_triplet<R: Rng>(
    buffer: &ReplayBuffer,
    rng: &mut R,
) -> Result<TripletIndices> {
    if buffer.len() < 3 {
        return Err(Error::Sampling("buffer too small for a triplet".into()));
    }
    for _ in 0..SAMPLE_RETRIES {
        let a = rng.random_range(0..buffer.len());
        let b = rng.random_range(0..buffer.len());
        let c = rng.random_range(0..buffer.len());
        if a == b || b == c || a == c {
            continue;
        }
        let ya = &buffer.get(a).state;
        let d_ab = ground_truth_distance(ya, &buffer.get(b).state)?;
        let d_ac = ground_truth_distance(ya, &buffer.get(c).state)?;
        if d_ab == d_ac {
            continue;
        }
        let (positive, negative) = if d_ab < d_ac { (b, c) } else { (c, b) };
        return Ok(TripletIndices { anchor: a, positive, negative });
    }
    Err(Error::Sampling(format!(
        "no ground-truth triplet with distinct distances after {SAMPLE_RETRIES} draws"
    )))
}

/// Triplet under the configured supervision mode.
pub fn sample_triplet<R: Rng>(
    buffer: &ReplayBuffer,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<TripletIndices> {
    match cfg.mode {
        SamplerMode::GroundTruth => sample_ground_truth_triplet(buffer, rng),
        _ => sample_temporal_triplet(buffer, cfg, rng),
    }
}

/// Two same-episode indices within `max_positive_offset` steps whose factor
/// states differ (identical pairs carry no pair supervision and are
/// redrawn).
pub fn sample_pair<R: Rng>(
    buffer: &ReplayBuffer,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if buffer.len() < 2 {
        return Err(Error::Precondition("buffer too small for a pair".into()));
    }
    let eligible: Vec<usize> = buffer
        .episode_ranges()
        .flat_map(|range| {
            let end = range.end;
            range.filter(move |&i| i + 1 < end)
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::Sampling("no episode long enough for a pair".into()));
    }
    for _ in 0..SAMPLE_RETRIES {
        let first = eligible[rng.random_range(0..eligible.len())];
        let episode_end = buffer
            .episode_ranges()
            .find(|r| r.contains(&first))
            .expect("index came from an episode")
            .end;
        let room = episode_end - first - 1;
        let offset = rng.random_range(1..=cfg.max_positive_offset.min(room));
        let second = first + offset;
        if buffer.get(first).state != buffer.get(second).state {
            return Ok((first, second));
        }
    }
    Err(Error::Sampling(format!(
        "no pair with distinct states after {SAMPLE_RETRIES} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Direction;
    use proptest::prelude::*;

    fn spec() -> GridSpec {
        GridSpec::new(1, 8, 8, 8, 64).unwrap()
    }

    fn small_spec() -> GridSpec {
        GridSpec::new(1, 2, 2, 4, 8).unwrap()
    }

    #[test]
    fn collect_counts_and_episodes() {
        let buf = collect_random_walk(&spec(), 1, 5, 7).unwrap();
        assert_eq!(buf.len(), 5);
        assert_eq!(buf.num_episodes(), 1);
    }

    #[test]
    fn collect_is_deterministic() {
        let a = collect_random_walk(&spec(), 3, 50, 42).unwrap();
        let b = collect_random_walk(&spec(), 3, 50, 42).unwrap();
        assert_eq!(a.transitions(), b.transitions());
    }

    #[test]
    fn collect_transitions_are_consistent() {
        let buf = collect_random_walk(&spec(), 2, 100, 3).unwrap();
        for t in buf.transitions() {
            let next = step(&t.state, t.action, buf.spec()).unwrap();
            assert_eq!(next, t.next_state);
        }
    }

    /// Chi-square against uniform visitation on a 4x4 grid. The walk's
    /// transition matrix is doubly stochastic (clamped moves are
    /// self-loops), so the stationary distribution is uniform. The
    /// critical value is chi2(15 dof, p=0.001) = 37.70 inflated 4x for
    /// autocorrelation of consecutive walk states.
    #[test]
    fn long_walk_visitation_is_uniform() {
        let spec = GridSpec::new(1, 2, 2, 4, 8).unwrap();
        let steps = 100_000;
        let buf = collect_random_walk(&spec, 1, steps, 11).unwrap();
        let mut counts = [0u64; 16];
        for t in buf.transitions() {
            let (x, y) = t.state.positions[0];
            counts[(x * 4 + y) as usize] += 1;
        }
        let expected = steps as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 4.0 * 37.70, "chi2 = {chi2}");
    }

    #[test]
    fn forced_triplet_on_length_three_episode() {
        let buf = collect_random_walk(&small_spec(), 1, 3, 0).unwrap();
        let cfg = SamplerConfig { max_positive_offset: 1, max_negative_offset: 2, mode: SamplerMode::Temporal };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = sample_temporal_triplet(&buf, &cfg, &mut rng).unwrap();
        assert_eq!(t, TripletIndices { anchor: 0, positive: 1, negative: 2 });
    }

    #[test]
    fn temporal_triplets_strictly_ordered() {
        let buf = collect_random_walk(&spec(), 4, 64, 5).unwrap();
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let t = sample_temporal_triplet(&buf, &cfg, &mut rng).unwrap();
            let (a, p, n) = (buf.get(t.anchor), buf.get(t.positive), buf.get(t.negative));
            assert_eq!(a.episode_id, p.episode_id);
            assert_eq!(a.episode_id, n.episode_id);
            assert!(a.step_index < p.step_index && p.step_index < n.step_index);
        }
    }

    #[test]
    fn temporal_sampler_errors_on_short_episodes() {
        let buf = collect_random_walk(&small_spec(), 3, 2, 0).unwrap();
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_temporal_triplet(&buf, &cfg, &mut rng),
            Err(Error::Sampling(_))
        ));
    }

    /// Monte-Carlo validation of the temporal-proximity assumption: over
    /// many triplets from a random walk on an 8x8 grid, the mean
    /// anchor-positive factor distance is below anchor-negative.
    #[test]
    fn temporal_gap_orders_ground_truth_distances() {
        let buf = collect_random_walk(&spec(), 8, 512, 13).unwrap();
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sum_ap = 0.0;
        let mut sum_an = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let t = sample_temporal_triplet(&buf, &cfg, &mut rng).unwrap();
            sum_ap += ground_truth_distance(&buf.get(t.anchor).state, &buf.get(t.positive).state)
                .unwrap() as f64;
            sum_an += ground_truth_distance(&buf.get(t.anchor).state, &buf.get(t.negative).state)
                .unwrap() as f64;
        }
        assert!(
            sum_ap / n as f64 + 0.3 < sum_an / n as f64,
            "mean d_ap = {}, mean d_an = {}",
            sum_ap / n as f64,
            sum_an / n as f64
        );
    }

    #[test]
    fn ground_truth_triplet_on_forced_states() {
        // States (0,0), (0,1), (5,5): from anchor (0,0), positive must be
        // (0,1) and negative (5,5).
        let spec = GridSpec::new(1, 8, 8, 8, 64).unwrap();
        let states = [(0, 0), (0, 1), (5, 5)];
        let transitions: Vec<Transition> = states
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Transition {
                state: FactorState::single(x, y),
                action: GridAction::new(0, Direction::Up),
                reward: 0.0,
                next_state: FactorState::single(x, y),
                episode_id: 0,
                step_index: i as u32,
            })
            .collect();
        let buf = ReplayBuffer::from_transitions(spec, transitions).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = sample_ground_truth_triplet(&buf, &mut rng).unwrap();
            let d_ap = ground_truth_distance(&buf.get(t.anchor).state, &buf.get(t.positive).state).unwrap();
            let d_an = ground_truth_distance(&buf.get(t.anchor).state, &buf.get(t.negative).state).unwrap();
            assert!(d_ap < d_an);
            if t.anchor == 0 {
                assert_eq!((t.positive, t.negative), (1, 2));
            }
        }
    }

    /// Role assignment is symmetric: on a 3-state buffer every state
    /// anchors roughly a third of the triplets.
    #[test]
    fn ground_truth_roles_symmetric() {
        let spec = GridSpec::new(1, 8, 8, 8, 64).unwrap();
        let states = [(0u32, 0u32), (0, 3), (7, 7)];
        let transitions: Vec<Transition> = states
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Transition {
                state: FactorState::single(x, y),
                action: GridAction::new(0, Direction::Up),
                reward: 0.0,
                next_state: FactorState::single(x, y),
                episode_id: 0,
                step_index: i as u32,
            })
            .collect();
        let buf = ReplayBuffer::from_transitions(spec, transitions).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut anchor_counts = [0usize; 3];
        let n = 9000;
        for _ in 0..n {
            let t = sample_ground_truth_triplet(&buf, &mut rng).unwrap();
            anchor_counts[t.anchor] += 1;
        }
        for &c in &anchor_counts {
            let frac = c as f64 / n as f64;
            assert!((frac - 1.0 / 3.0).abs() < 0.05, "anchor fraction {frac}");
        }
    }

    #[test]
    fn pair_on_length_two_episode_is_forced() {
        let spec = small_spec();
        // Hand-build a 2-step episode with distinct states.
        let transitions = vec![
            Transition {
                state: FactorState::single(0, 0),
                action: GridAction::new(0, Direction::Down),
                reward: 0.0,
                next_state: FactorState::single(0, 1),
                episode_id: 0,
                step_index: 0,
            },
            Transition {
                state: FactorState::single(0, 1),
                action: GridAction::new(0, Direction::Down),
                reward: 0.0,
                next_state: FactorState::single(0, 2),
                episode_id: 0,
                step_index: 1,
            },
        ];
        let buf = ReplayBuffer::from_transitions(spec, transitions).unwrap();
        let cfg = SamplerConfig { max_positive_offset: 1, ..SamplerConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(sample_pair(&buf, &cfg, &mut rng).unwrap(), (0, 1));
    }

    #[test]
    fn pairs_share_episode_and_change_exactly_one_factor_at_offset_one() {
        let buf = collect_random_walk(&spec(), 4, 64, 9).unwrap();
        let cfg = SamplerConfig { max_positive_offset: 1, ..SamplerConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let (i, j) = sample_pair(&buf, &cfg, &mut rng).unwrap();
            let (a, b) = (buf.get(i), buf.get(j));
            assert_eq!(a.episode_id, b.episode_id);
            let changed = a
                .state
                .factors()
                .iter()
                .zip(b.state.factors())
                .filter(|&(&x, y)| x != y)
                .count();
            assert_eq!(changed, 1);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walk.buf");
        let buf = collect_random_walk(&spec(), 2, 30, 17).unwrap();
        buf.save(&path).unwrap();
        let loaded = ReplayBuffer::load(&path).unwrap();
        assert_eq!(loaded.spec(), buf.spec());
        assert_eq!(loaded.transitions(), buf.transitions());
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.buf");
        std::fs::write(&path, b"NOTABUF!xxxxxxxxxxxx").unwrap();
        assert!(matches!(ReplayBuffer::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn push_rejects_nonmonotonic_steps() {
        let spec = small_spec();
        let t = |step_index| Transition {
            state: FactorState::single(0, 0),
            action: GridAction::new(0, Direction::Up),
            reward: 0.0,
            next_state: FactorState::single(0, 0),
            episode_id: 0,
            step_index,
        };
        let mut buf = ReplayBuffer::new(spec);
        buf.push(t(0)).unwrap();
        buf.push(t(1)).unwrap();
        assert!(buf.push(t(1)).is_err());
    }

    proptest! {
        /// Every sampled triplet is within one episode and strictly
        /// ordered, under arbitrary valid sampler configs.
        #[test]
        fn triplet_ordering_invariant(seed in 0u64..500, pos in 1usize..6, extra in 1usize..8) {
            let buf = collect_random_walk(&spec(), 2, 40, 21).unwrap();
            let cfg = SamplerConfig {
                max_positive_offset: pos,
                max_negative_offset: pos + extra,
                mode: SamplerMode::Temporal,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = sample_temporal_triplet(&buf, &cfg, &mut rng).unwrap();
            prop_assert!(t.anchor < t.positive && t.positive < t.negative);
            prop_assert_eq!(buf.get(t.anchor).episode_id, buf.get(t.negative).episode_id);
            prop_assert!(t.positive - t.anchor <= pos);
            prop_assert!(t.negative - t.anchor <= pos + extra);
        }
    }
}
