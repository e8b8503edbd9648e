//! The 210-entry normalized state vector, feature-group masks and datasets.
//!
//! | slots     | content                                  | group |
//! |-----------|------------------------------------------|-------|
//! | 0..32     | own units/buildings                      | a     |
//! | 32..39    | own technologies                         | a     |
//! | 39..58    | own upgrades                             | a     |
//! | 58..116   | builds in production                     | b     |
//! | 116..174  | progress of the soonest-finishing build  | c     |
//! | 174..207  | observed enemy material                  | d     |
//! | 207..210  | supply used, max, left                   | e     |

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::catalog::{BuildCatalog, ENEMY_TYPES, OWN_BUILDS};
use crate::error::{ConsistencyError, FormatError};
use crate::event_log::EventLog;
use crate::forward_model::{extract_pairs, MacroState};
use crate::norms::NormalizationTable;

pub const STATE_DIM: usize = 210;
pub const OWN: Range<usize> = 0..OWN_BUILDS;
pub const IN_PRODUCTION: Range<usize> = OWN_BUILDS..2 * OWN_BUILDS;
pub const PROGRESS: Range<usize> = 2 * OWN_BUILDS..3 * OWN_BUILDS;
pub const ENEMY: Range<usize> = 3 * OWN_BUILDS..3 * OWN_BUILDS + ENEMY_TYPES;
pub const SUPPLY: Range<usize> = 3 * OWN_BUILDS + ENEMY_TYPES..STATE_DIM;
pub const SUPPLY_USED: usize = SUPPLY.start;
pub const SUPPLY_MAX: usize = SUPPLY.start + 1;
pub const SUPPLY_LEFT: usize = SUPPLY.start + 2;

#[derive(Clone, PartialEq)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn zeros() -> Self {
        StateVector([0.0; STATE_DIM])
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        let arr: [f64; STATE_DIM] = values.try_into().ok()?;
        Some(StateVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn in_unit_range(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nonzero: Vec<(usize, f64)> = self.0.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        f.debug_struct("StateVector").field("nonzero", &nonzero).finish()
    }
}

static CLAMP_LOGGED: [AtomicU64; 4] = [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)];

fn note_clamp(slot: usize) {
    let bit = 1u64 << (slot % 64);
    if CLAMP_LOGGED[slot / 64].fetch_or(bit, Ordering::Relaxed) & bit == 0 {
        log::warn!("state feature {slot} exceeded its normalization cap; clamped to 1.0");
    }
}

#[inline]
fn scaled(slot: usize, value: f64, cap: f64) -> f64 {
    let v = value / cap;
    if v > 1.0 {
        note_clamp(slot);
        1.0
    } else if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Encodes a macro state. Counts above their cap clamp to 1.0.
pub fn encode(state: &MacroState, catalog: &BuildCatalog, norms: &NormalizationTable) -> StateVector {
    debug_assert_eq!(catalog.builds().len(), OWN_BUILDS);
    let mut v = [0.0; STATE_DIM];
    for i in 0..OWN_BUILDS {
        v[OWN.start + i] = scaled(OWN.start + i, f64::from(state.own_count[i]), norms.own[i]);
        v[IN_PRODUCTION.start + i] =
            scaled(IN_PRODUCTION.start + i, f64::from(state.in_production_count[i]), norms.in_production[i]);
        v[PROGRESS.start + i] = state.production_progress[i].clamp(0.0, 1.0);
    }
    for i in 0..ENEMY_TYPES {
        v[ENEMY.start + i] = scaled(ENEMY.start + i, f64::from(state.enemy_count[i]), norms.enemy[i]);
    }
    v[SUPPLY_USED] = scaled(SUPPLY_USED, f64::from(state.supply_used), norms.supply);
    v[SUPPLY_MAX] = scaled(SUPPLY_MAX, f64::from(state.supply_max), norms.supply);
    v[SUPPLY_LEFT] = scaled(SUPPLY_LEFT, state.supply_left().max(0) as f64, norms.supply);
    StateVector(v)
}

/// Catalog and caps bundled for inference-time encoding.
#[derive(Clone, Debug)]
pub struct EncoderContext {
    pub catalog: BuildCatalog,
    pub norms: NormalizationTable,
    catalog_hash: [u8; 32],
    norms_hash: [u8; 32],
}

impl EncoderContext {
    pub fn new(catalog: BuildCatalog, norms: NormalizationTable) -> Self {
        let catalog_hash = catalog.content_hash();
        let norms_hash = norms.content_hash(&catalog);
        EncoderContext { catalog, norms, catalog_hash, norms_hash }
    }

    pub fn default_pvt() -> Self {
        let catalog = BuildCatalog::default_pvt();
        let norms = NormalizationTable::default_for(&catalog);
        Self::new(catalog, norms)
    }

    pub fn encode(&self, state: &MacroState) -> StateVector {
        encode(state, &self.catalog, &self.norms)
    }

    pub fn catalog_hash(&self) -> [u8; 32] {
        self.catalog_hash
    }

    pub fn norms_hash(&self) -> [u8; 32] {
        self.norms_hash
    }
}

/// Which input groups a network may see. Group `a` is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FeatureGroupMask {
    b: bool,
    c: bool,
    d: bool,
    e: bool,
}

impl Default for FeatureGroupMask {
    fn default() -> Self {
        Self::FULL
    }
}

impl FeatureGroupMask {
    pub const FULL: Self = FeatureGroupMask { b: true, c: true, d: true, e: true };
    pub const OWN_ONLY: Self = FeatureGroupMask { b: false, c: false, d: false, e: false };

    /// `include_a` must be true.
    pub fn new(include_a: bool, b: bool, c: bool, d: bool, e: bool) -> Option<Self> {
        include_a.then_some(FeatureGroupMask { b, c, d, e })
    }

    pub fn without_opponent(self) -> Self {
        FeatureGroupMask { d: false, ..self }
    }

    pub fn includes(&self, group: char) -> bool {
        match group {
            'a' => true,
            'b' => self.b,
            'c' => self.c,
            'd' => self.d,
            'e' => self.e,
            _ => false,
        }
    }

    fn excluded_ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        [(self.b, IN_PRODUCTION), (self.c, PROGRESS), (self.d, ENEMY), (self.e, SUPPLY)]
            .into_iter()
            .filter(|(keep, _)| !keep)
            .map(|(_, r)| r)
    }

    /// Zeroes excluded groups in place; the vector length never changes.
    pub fn apply_in_place(&self, values: &mut [f64]) {
        for r in self.excluded_ranges() {
            values[r].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Bit `i` set means group `b + i` is included (a is implicit).
    pub fn to_bits(self) -> u8 {
        u8::from(self.b) | u8::from(self.c) << 1 | u8::from(self.d) << 2 | u8::from(self.e) << 3
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits < 16).then_some(FeatureGroupMask { b: bits & 1 != 0, c: bits & 2 != 0, d: bits & 4 != 0, e: bits & 8 != 0 })
    }
}

pub fn apply_mask(v: &StateVector, mask: FeatureGroupMask) -> StateVector {
    let mut out = v.clone();
    mask.apply_in_place(&mut out.0);
    out
}

impl fmt::Display for FeatureGroupMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a")?;
        for (on, g) in [(self.b, "b"), (self.c, "c"), (self.d, "d"), (self.e, "e")] {
            if on {
                write!(f, "+{g}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for FeatureGroupMask {
    type Err = String;

    /// Accepts forms like `a+b+c+d+e` or `a+d`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut seen = [false; 5];
        for part in s.split('+').map(str::trim) {
            let idx = match part {
                "a" => 0,
                "b" => 1,
                "c" => 2,
                "d" => 3,
                "e" => 4,
                other => return Err(format!("unknown feature group `{other}`")),
            };
            if seen[idx] {
                return Err(format!("feature group `{part}` listed twice"));
            }
            seen[idx] = true;
        }
        Self::new(seen[0], seen[1], seen[2], seen[3], seen[4]).ok_or_else(|| "feature group `a` is required".into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub state: StateVector,
    /// Output-layer class of the build that was started.
    pub action: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameRecord {
    pub game_id: String,
    pub samples: Vec<Sample>,
}

/// Encoded pairs grouped by game, in corpus order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub games: Vec<GameRecord>,
}

impl GameRecord {
    /// Extracts and encodes every pair of one log.
    pub fn from_log(log: &EventLog, ctx: &EncoderContext) -> Result<Self, ConsistencyError> {
        let samples = extract_pairs(log, &ctx.catalog)?
            .iter()
            .map(|pair| Sample { state: ctx.encode(&pair.state), action: pair.action.0 as u8 })
            .collect();
        Ok(GameRecord { game_id: log.game_id.clone(), samples })
    }
}

impl Dataset {
    /// All-or-nothing extraction of a corpus, keeping log order.
    pub fn from_logs<'a>(
        logs: impl IntoIterator<Item = &'a EventLog>,
        ctx: &EncoderContext,
    ) -> Result<Self, ConsistencyError> {
        let games = logs.into_iter().map(|log| GameRecord::from_log(log, ctx)).collect::<Result<_, _>>()?;
        Ok(Dataset { games })
    }
}

const DATASET_MAGIC: &[u8; 4] = b"BNDS";
const DATASET_VERSION: u32 = 1;

impl Dataset {
    pub fn pair_count(&self) -> usize {
        self.games.iter().map(|g| g.samples.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.games.iter().flat_map(|g| g.samples.iter())
    }

    /// Binary layout, little-endian: magic `BNDS`, version u32, feature count
    /// u32, class count u32, game count u64; then per game an id (u32 length
    /// + UTF-8), pair count u64, payload byte length u64 and the rows (class
    /// u16 followed by the features as f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let row = 2 + 8 * STATE_DIM;
        let mut out = Vec::with_capacity(24 + self.pair_count() * row + self.games.len() * 32);
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(STATE_DIM as u32).to_le_bytes());
        out.extend_from_slice(&(OWN_BUILDS as u32).to_le_bytes());
        out.extend_from_slice(&(self.games.len() as u64).to_le_bytes());
        for g in &self.games {
            out.extend_from_slice(&(g.game_id.len() as u32).to_le_bytes());
            out.extend_from_slice(g.game_id.as_bytes());
            out.extend_from_slice(&(g.samples.len() as u64).to_le_bytes());
            out.extend_from_slice(&((g.samples.len() * row) as u64).to_le_bytes());
            for s in &g.samples {
                out.extend_from_slice(&u16::from(s.action).to_le_bytes());
                for v in &s.state.0 {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != DATASET_MAGIC {
            return Err(FormatError::Magic);
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(FormatError::Version(version));
        }
        let features = r.u32()? as usize;
        let classes = r.u32()? as usize;
        if features != STATE_DIM || classes != OWN_BUILDS {
            return Err(FormatError::Shape(format!(
                "expected {STATE_DIM} features / {OWN_BUILDS} classes, file declares {features} / {classes}"
            )));
        }
        let n_games = r.u64()?;
        let row = 2 + 8 * features;
        let mut games = Vec::new();
        for _ in 0..n_games {
            let id_len = r.u32()? as usize;
            let game_id = core::str::from_utf8(r.take(id_len)?)
                .map_err(|_| FormatError::Invalid("game id is not UTF-8".into()))?
                .into();
            let n_pairs = r.u64()? as usize;
            let payload = r.u64()? as usize;
            if n_pairs.checked_mul(row) != Some(payload) {
                return Err(FormatError::Shape(format!(
                    "game `{game_id}`: {payload} payload bytes for {n_pairs} rows of {features} features"
                )));
            }
            let mut samples = Vec::with_capacity(n_pairs);
            for _ in 0..n_pairs {
                let action = r.u16()?;
                if usize::from(action) >= classes {
                    return Err(FormatError::Invalid(format!("class {action} out of range")));
                }
                let mut state = [0.0; STATE_DIM];
                for v in state.iter_mut() {
                    *v = r.f64()?;
                    if !v.is_finite() {
                        return Err(FormatError::Invalid("non-finite feature".into()));
                    }
                }
                samples.push(Sample { state: StateVector(state), action: action as u8 });
            }
            games.push(GameRecord { game_id, samples });
        }
        if !r.is_empty() {
            return Err(FormatError::Invalid("trailing bytes after last game".into()));
        }
        Ok(Dataset { games })
    }

    /// Debug export: one whitespace-separated line per pair,
    /// `<game_id> <class> <v0> ... <v209>`.
    pub fn to_text(&self) -> String {
        use core::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# buildnet dataset v{DATASET_VERSION}: {STATE_DIM} features, {OWN_BUILDS} classes");
        for g in &self.games {
            for s in &g.samples {
                let _ = write!(out, "{} {}", g.game_id, s.action);
                for v in &s.state.0 {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() < n {
            return Err(FormatError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn ctx() -> EncoderContext {
        EncoderContext::default_pvt()
    }

    #[test]
    fn layout_constants() {
        assert_eq!((OWN.start, OWN.end), (0, 58));
        assert_eq!(IN_PRODUCTION.start, 58);
        assert_eq!(PROGRESS.start, 116);
        assert_eq!(ENEMY.start, 174);
        assert_eq!(ENEMY.end, 207);
        assert_eq!((SUPPLY_USED, SUPPLY_MAX, SUPPLY_LEFT), (207, 208, 209));
    }

    #[test]
    fn zeroed_state_encodes_to_zeros() {
        let c = ctx();
        assert_eq!(c.encode(&MacroState::zeroed()), StateVector::zeros());
    }

    #[test]
    fn researched_tech_is_binary() {
        let c = ctx();
        let mut s = MacroState::zeroed();
        s.own_count[32 + 3] = 1;
        assert_eq!(c.encode(&s).0[35], 1.0);
    }

    #[test]
    fn initial_state_hand_values() {
        let c = ctx();
        let v = c.encode(&MacroState::initial(&c.catalog));
        // probe cap 100, nexus cap 30, supply cap 200
        let probe = c.catalog.build_id("probe").unwrap().index();
        let nexus = c.catalog.build_id("nexus").unwrap().index();
        assert_eq!(v.0[probe], 4.0 / 100.0);
        assert_eq!(v.0[nexus], 1.0 / 30.0);
        assert_eq!(v.0[207], 8.0 / 200.0);
        assert_eq!(v.0[208], 18.0 / 200.0);
        assert_eq!(v.0[209], 10.0 / 200.0);
        assert_eq!(v.0.iter().filter(|x| **x != 0.0).count(), 5);
    }

    #[test]
    fn counts_above_cap_clamp() {
        let c = ctx();
        let mut s = MacroState::zeroed();
        s.own_count[0] = 250;
        s.supply_used = 500;
        let v = c.encode(&s);
        assert_eq!(v.0[0], 1.0);
        assert_eq!(v.0[SUPPLY_USED], 1.0);
        assert_eq!(v.0[SUPPLY_LEFT], 0.0);
    }

    #[test]
    fn masking_opponent_zeroes_only_enemy_slots() {
        let mut v = StateVector::zeros();
        for (i, x) in v.0.iter_mut().enumerate() {
            *x = (i as f64 + 1.0) / 300.0;
        }
        let m = apply_mask(&v, FeatureGroupMask::FULL.without_opponent());
        for i in 0..STATE_DIM {
            if ENEMY.contains(&i) {
                assert_eq!(m.0[i], 0.0);
            } else {
                assert_eq!(m.0[i], v.0[i]);
            }
        }
        assert_eq!(apply_mask(&v, FeatureGroupMask::FULL), v);
    }

    #[test]
    fn mask_text_forms() {
        for s in ["a", "a+d", "a+b+c+e", "a+b+c+d+e"] {
            let m: FeatureGroupMask = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
            assert_eq!(FeatureGroupMask::from_bits(m.to_bits()), Some(m));
        }
        assert!("b+c".parse::<FeatureGroupMask>().is_err());
        assert!("a+a".parse::<FeatureGroupMask>().is_err());
        assert!("a+x".parse::<FeatureGroupMask>().is_err());
    }

    fn tiny_dataset() -> Dataset {
        let mut v = StateVector::zeros();
        v.0[3] = 0.25;
        v.0[209] = 1.0 / 3.0;
        Dataset {
            games: alloc::vec![
                GameRecord { game_id: "g0".into(), samples: alloc::vec![Sample { state: v.clone(), action: 57 }] },
                GameRecord { game_id: "g1".into(), samples: Vec::new() },
            ],
        }
    }

    #[test]
    fn dataset_round_trip() {
        let d = tiny_dataset();
        assert_eq!(Dataset::from_bytes(&d.to_bytes()).unwrap(), d);
        let empty = Dataset::default();
        assert_eq!(Dataset::from_bytes(&empty.to_bytes()).unwrap(), empty);
    }

    #[test]
    fn short_rows_are_a_shape_error() {
        let d = tiny_dataset();
        let mut bytes = d.to_bytes();
        // rewrite game 0's payload length as if rows carried 209 features
        let payload_at = 24 + 4 + 2 + 8;
        let bad = (2u64 + 8 * 209).to_le_bytes();
        bytes[payload_at..payload_at + 8].copy_from_slice(&bad);
        bytes.drain(payload_at + 8 + 2..payload_at + 8 + 10);
        assert!(matches!(Dataset::from_bytes(&bytes), Err(FormatError::Shape(_))));
    }

    #[test]
    fn corrupt_headers_rejected() {
        let bytes = tiny_dataset().to_bytes();
        assert_eq!(Dataset::from_bytes(&bytes[..10]), Err(FormatError::Truncated));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Dataset::from_bytes(&bad), Err(FormatError::Magic));
        let mut wide = bytes;
        wide[8..12].copy_from_slice(&209u32.to_le_bytes());
        assert!(matches!(Dataset::from_bytes(&wide), Err(FormatError::Shape(_))));
    }
}
