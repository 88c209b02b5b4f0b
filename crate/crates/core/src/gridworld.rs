//! Procedurally generated multi-square pixel gridworld.
//!
//! States are tuples of integer cell positions, one `(x, y)` pair per
//! square. Rendering places each square as a solid block of intensity 1 on
//! a black background, one colour channel per square, at pixel offset
//! `(x * step_px, y * step_px)`. Dynamics move one square one cell in a
//! cardinal direction and clamp at the walls. Everything here is a pure
//! function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on exhaustive state enumeration.
pub const DEFAULT_STATE_CAP: u64 = 1 << 20;

/// Geometry of the gridworld and its rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of movable squares (1 for the spacing sweep, 3 for the
    /// multi-square dataset).
    pub num_squares: usize,
    /// Side length of each square in pixels.
    pub square_size_px: usize,
    /// Translation per cell in pixels. Overlap between adjacent positions
    /// vanishes once this reaches `square_size_px`.
    pub step_px: usize,
    /// Valid positions per axis per square.
    pub grid_cells_per_axis: usize,
    /// Side length of the rendered image. Must fit every position.
    pub image_side_px: usize,
}

impl GridSpec {
    /// Single-square spec with the image padded to `image_side_px`.
    pub fn new(
        num_squares: usize,
        square_size_px: usize,
        step_px: usize,
        grid_cells_per_axis: usize,
        image_side_px: usize,
    ) -> Result<Self> {
        let spec = GridSpec {
            num_squares,
            square_size_px,
            step_px,
            grid_cells_per_axis,
            image_side_px,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Smallest image side that fits every position under this geometry.
    pub fn min_image_side(square_size_px: usize, step_px: usize, cells: usize) -> usize {
        (cells - 1) * step_px + square_size_px
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_squares == 0 {
            return Err(Error::InvalidSpec("num_squares must be >= 1".into()));
        }
        if self.square_size_px == 0 {
            return Err(Error::InvalidSpec("square_size_px must be > 0".into()));
        }
        if self.step_px == 0 {
            return Err(Error::InvalidSpec("step_px must be >= 1".into()));
        }
        if self.grid_cells_per_axis < 2 {
            return Err(Error::InvalidSpec("grid_cells_per_axis must be >= 2".into()));
        }
        let needed = Self::min_image_side(self.square_size_px, self.step_px, self.grid_cells_per_axis);
        if self.image_side_px < needed {
            return Err(Error::InvalidSpec(format!(
                "image_side_px {} too small: need at least {}",
                self.image_side_px, needed
            )));
        }
        Ok(())
    }

    /// One colour channel per square.
    pub fn channels(&self) -> usize {
        self.num_squares
    }

    /// Number of ground-truth factors: two coordinates per square.
    pub fn num_factors(&self) -> usize {
        2 * self.num_squares
    }

    /// Total state count, `cells^(2 * num_squares)`, saturating.
    pub fn state_count(&self) -> u64 {
        let cells = self.grid_cells_per_axis as u64;
        let mut n = 1u64;
        for _ in 0..self.num_factors() {
            n = n.saturating_mul(cells);
        }
        n
    }
}

/// Ground-truth generative factors: the cell position of each square.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorState {
    /// `(x_cell, y_cell)` per square.
    pub positions: Vec<(u32, u32)>,
}

impl FactorState {
    pub fn new(positions: Vec<(u32, u32)>) -> Self {
        FactorState { positions }
    }

    /// Single-square convenience constructor.
    pub fn single(x: u32, y: u32) -> Self {
        FactorState { positions: vec![(x, y)] }
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.positions.len() != spec.num_squares {
            return Err(Error::Precondition(format!(
                "state has {} squares, spec has {}",
                self.positions.len(),
                spec.num_squares
            )));
        }
        let cells = spec.grid_cells_per_axis as u32;
        for &(x, y) in &self.positions {
            if x >= cells || y >= cells {
                return Err(Error::Precondition(format!(
                    "position ({x}, {y}) outside grid of {cells} cells"
                )));
            }
        }
        Ok(())
    }

    /// Factors flattened to `[x0, y0, x1, y1, ...]`.
    pub fn factors(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(2 * self.positions.len());
        for &(x, y) in &self.positions {
            out.push(x);
            out.push(y);
        }
        out
    }
}

/// Rendered pixel image, shape `(channels, height, width)`, values in [0, 1].
pub type Observation = ndarray::Array3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    /// Cell-coordinate delta `(dx, dy)`. Up decreases y.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
            Direction::Left => 2,
            Direction::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Direction::ALL.get(i).copied()
    }
}

/// Move one square one cell in a cardinal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridAction {
    pub square_index: usize,
    pub direction: Direction,
}

impl GridAction {
    pub fn new(square_index: usize, direction: Direction) -> Self {
        GridAction { square_index, direction }
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.square_index >= spec.num_squares {
            return Err(Error::Precondition(format!(
                "square_index {} out of range for {} squares",
                self.square_index, spec.num_squares
            )));
        }
        Ok(())
    }

    /// All actions under `spec`, ordered by square then direction.
    pub fn all(spec: &GridSpec) -> Vec<GridAction> {
        let mut out = Vec::with_capacity(4 * spec.num_squares);
        for sq in 0..spec.num_squares {
            for dir in Direction::ALL {
                out.push(GridAction::new(sq, dir));
            }
        }
        out
    }
}

/// Render a state to an image. Deterministic; squares of distinct channels
/// never occlude each other.
pub fn render(state: &FactorState, spec: &GridSpec) -> Result<Observation> {
    state.validate(spec)?;
    let side = spec.image_side_px;
    let mut pixels = Observation::zeros((spec.channels(), side, side));
    for (ch, &(x, y)) in state.positions.iter().enumerate() {
        let px = x as usize * spec.step_px;
        let py = y as usize * spec.step_px;
        for row in py..py + spec.square_size_px {
            for col in px..px + spec.square_size_px {
                pixels[(ch, row, col)] = 1.0;
            }
        }
    }
    Ok(pixels)
}

/// Apply an action. Moves that would leave the grid return the state
/// unchanged (wall clamping); dynamics are deterministic.
pub fn step(state: &FactorState, action: GridAction, spec: &GridSpec) -> Result<FactorState> {
    state.validate(spec)?;
    action.validate(spec)?;
    let (dx, dy) = action.direction.delta();
    let cells = spec.grid_cells_per_axis as i64;
    let mut next = state.clone();
    let (x, y) = next.positions[action.square_index];
    let nx = x as i64 + dx;
    let ny = y as i64 + dy;
    if (0..cells).contains(&nx) && (0..cells).contains(&ny) {
        next.positions[action.square_index] = (nx as u32, ny as u32);
    }
    Ok(next)
}

/// Exhaustive lexicographic enumeration of all states, capped at `cap`.
pub fn enumerate_states(spec: &GridSpec, cap: u64) -> Result<Vec<FactorState>> {
    spec.validate()?;
    let count = spec.state_count();
    if count > cap {
        return Err(Error::Capacity { count, cap });
    }
    let cells = spec.grid_cells_per_axis as u32;
    let factors = spec.num_factors();
    let mut out = Vec::with_capacity(count as usize);
    // Odometer over flattened (x0, y0, x1, y1, ...), last digit fastest.
    let mut digits = vec![0u32; factors];
    loop {
        let positions = digits.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        out.push(FactorState::new(positions));
        let mut i = factors;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < cells {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Index of `state` in the `enumerate_states` ordering.
pub fn state_index(state: &FactorState, spec: &GridSpec) -> usize {
    let cells = spec.grid_cells_per_axis as usize;
    let mut idx = 0usize;
    for &f in &state.factors() {
        idx = idx * cells + f as usize;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{HashSet, VecDeque};

    fn spec_1sq_8c() -> GridSpec {
        GridSpec::new(1, 8, 8, 8, 64).unwrap()
    }

    #[test]
    fn render_top_left_block() {
        let spec = spec_1sq_8c();
        let img = render(&FactorState::single(0, 0), &spec).unwrap();
        assert_eq!(img.dim(), (1, 64, 64));
        for r in 0..64 {
            for c in 0..64 {
                let expect = if r < 8 && c < 8 { 1.0 } else { 0.0 };
                assert_eq!(img[(0, r, c)], expect, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let spec = spec_1sq_8c();
        let s = FactorState::single(3, 5);
        let a = render(&s, &spec).unwrap();
        let b = render(&s, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn render_rejects_out_of_range_state() {
        let spec = spec_1sq_8c();
        let err = render(&FactorState::single(8, 0), &spec).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    /// Brute-force count of intersecting lit pixels between neighbours.
    fn overlap_pixels(spec: &GridSpec, a: &FactorState, b: &FactorState) -> usize {
        let ia = render(a, spec).unwrap();
        let ib = render(b, spec).unwrap();
        ia.iter().zip(ib.iter()).filter(|(&x, &y)| x > 0.0 && y > 0.0).count()
    }

    #[test]
    fn adjacent_states_at_step8_share_no_pixels() {
        let spec = spec_1sq_8c();
        for x in 0..7u32 {
            let a = FactorState::single(x, 2);
            let b = FactorState::single(x + 1, 2);
            assert_eq!(overlap_pixels(&spec, &a, &b), 0);
        }
    }

    #[test]
    fn adjacent_states_at_step4_overlap_half() {
        let spec = GridSpec::new(1, 8, 4, 8, 64).unwrap();
        let a = FactorState::single(2, 2);
        let b = FactorState::single(3, 2);
        // 4x8 strip shared by brute force.
        assert_eq!(overlap_pixels(&spec, &a, &b), 32);
    }

    #[test]
    fn step_clamps_at_walls() {
        let spec = spec_1sq_8c();
        let s = FactorState::single(0, 0);
        let up = step(&s, GridAction::new(0, Direction::Up), &spec).unwrap();
        assert_eq!(up, s);
    }

    #[test]
    fn step_moves_one_cell() {
        let spec = spec_1sq_8c();
        let s = FactorState::single(3, 4);
        let r = step(&s, GridAction::new(0, Direction::Right), &spec).unwrap();
        assert_eq!(r, FactorState::single(4, 4));
    }

    #[test]
    fn left_then_right_is_identity_in_interior() {
        let spec = spec_1sq_8c();
        let s = FactorState::single(3, 4);
        let l = step(&s, GridAction::new(0, Direction::Left), &spec).unwrap();
        let back = step(&l, GridAction::new(0, Direction::Right), &spec).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn enumerate_two_cells() {
        let spec = GridSpec::new(1, 2, 2, 2, 4).unwrap();
        let states = enumerate_states(&spec, DEFAULT_STATE_CAP).unwrap();
        let expect: Vec<FactorState> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(x, y)| FactorState::single(x, y))
            .collect();
        assert_eq!(states, expect);
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate_states(&spec_1sq_8c(), DEFAULT_STATE_CAP).unwrap().len(), 64);
        let spec3 = GridSpec::new(3, 8, 8, 8, 64).unwrap();
        assert_eq!(enumerate_states(&spec3, DEFAULT_STATE_CAP).unwrap().len(), 262_144);
    }

    #[test]
    fn enumerate_respects_cap() {
        let spec3 = GridSpec::new(3, 8, 8, 8, 64).unwrap();
        let err = enumerate_states(&spec3, 1000).unwrap_err();
        assert!(matches!(err, Error::Capacity { count: 262_144, cap: 1000 }));
    }

    #[test]
    fn enumeration_is_duplicate_free_and_indexable() {
        let spec = GridSpec::new(2, 4, 4, 3, 16).unwrap();
        let states = enumerate_states(&spec, DEFAULT_STATE_CAP).unwrap();
        let set: HashSet<_> = states.iter().cloned().collect();
        assert_eq!(set.len(), states.len());
        for (i, s) in states.iter().enumerate() {
            assert_eq!(state_index(s, &spec), i);
        }
    }

    #[test]
    fn every_state_reachable_by_bfs() {
        let spec = GridSpec::new(2, 2, 2, 3, 8).unwrap();
        let states = enumerate_states(&spec, DEFAULT_STATE_CAP).unwrap();
        let origin = FactorState::new(vec![(0, 0); 2]);
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(origin.clone());
        queue.push_back(origin);
        while let Some(s) = queue.pop_front() {
            for action in GridAction::all(&spec) {
                let n = step(&s, action, &spec).unwrap();
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        assert_eq!(seen.len(), states.len());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GridSpec::new(0, 8, 8, 8, 64).is_err());
        assert!(GridSpec::new(1, 0, 8, 8, 64).is_err());
        assert!(GridSpec::new(1, 8, 0, 8, 64).is_err());
        assert!(GridSpec::new(1, 8, 8, 1, 64).is_err());
        // Image too small for the last position.
        assert!(GridSpec::new(1, 8, 8, 8, 63).is_err());
    }

    proptest! {
        /// Lit pixel count per channel is exactly square_size^2 for all
        /// states: no clipping at the borders.
        #[test]
        fn pixel_count_conserved(x in 0u32..8, y in 0u32..8, step_px in 1usize..=8) {
            let spec = GridSpec::new(1, 8, step_px, 8, 7 * step_px + 8).unwrap();
            let img = render(&FactorState::single(x, y), &spec).unwrap();
            let lit = img.iter().filter(|&&v| v > 0.0).count();
            prop_assert_eq!(lit, 64);
        }

        /// Wall clamping keeps states valid under arbitrary action sequences.
        #[test]
        fn random_walks_stay_valid(seq in proptest::collection::vec((0usize..1, 0usize..4), 0..64)) {
            let spec = spec_1sq_8c();
            let mut s = FactorState::single(4, 4);
            for (sq, d) in seq {
                let action = GridAction::new(sq, Direction::from_index(d).unwrap());
                s = step(&s, action, &spec).unwrap();
                prop_assert!(s.validate(&spec).is_ok());
            }
        }
    }
}
