//! Build and enemy-type universes.
//!
//! Own builds are densely numbered in file order: units/buildings take
//! `0..32`, technologies `32..39`, upgrades `39..58`. That number is both the
//! state-vector slot for the own-count block and the output-layer class.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{LookupError, ParseError};

pub const UNITS_BUILDINGS: usize = 32;
pub const TECHNOLOGIES: usize = 7;
pub const UPGRADES: usize = 19;
/// Number of own build types, and of output classes.
pub const OWN_BUILDS: usize = UNITS_BUILDINGS + TECHNOLOGIES + UPGRADES;
pub const ENEMY_TYPES: usize = 33;

/// Shipped Protoss-vs-Terran catalog.
pub const DEFAULT_CATALOG: &str = include_str!("../data/protoss_vs_terran.catalog");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BuildId(pub u16);

impl BuildId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnemyTypeId(pub u16);

impl EnemyTypeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildKind {
    UnitOrBuilding,
    Technology,
    Upgrade,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildSpec {
    pub id: BuildId,
    pub name: String,
    pub kind: BuildKind,
    pub mineral_cost: u32,
    pub gas_cost: u32,
    /// Production time in game frames, at least 1.
    pub build_frames: u32,
    pub supply_cost: u32,
    pub supply_provided: u32,
    pub prerequisites: Vec<BuildId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnemySpec {
    pub id: EnemyTypeId,
    pub name: String,
}

/// Builds with a special economic role in the forward model and simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roles {
    pub worker: BuildId,
    pub main_building: BuildId,
    pub gas_building: Option<BuildId>,
    structures: Vec<bool>,
}

/// Immutable after construction; share freely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildCatalog {
    builds: Vec<BuildSpec>,
    enemies: Vec<EnemySpec>,
    roles: Roles,
    build_names: BTreeMap<String, BuildId>,
    enemy_names: BTreeMap<String, EnemyTypeId>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    UnitsBuildings,
    Technologies,
    Upgrades,
    EnemyTypes,
    Roles,
}

struct RawBuild {
    line: usize,
    name: String,
    kind: BuildKind,
    fields: [u32; 5],
    prereqs: Vec<String>,
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
    .trim()
}

fn split_names(s: &str) -> impl Iterator<Item = &str> {
    s.split('|').map(str::trim).filter(|n| !n.is_empty())
}

impl BuildCatalog {
    /// Parses the sectioned catalog text format.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut section: Option<Section> = None;
        let mut raw: [Vec<RawBuild>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut enemies: Vec<(usize, String)> = Vec::new();
        let mut role_lines: Vec<(usize, String, String)> = Vec::new();
        let mut saw_content = false;

        for (idx, full) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(full);
            if line.is_empty() {
                continue;
            }
            saw_content = true;
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(line_no, "unterminated section header"))?;
                section = Some(match name.trim() {
                    "units_buildings" => Section::UnitsBuildings,
                    "technologies" => Section::Technologies,
                    "upgrades" => Section::Upgrades,
                    "enemy_types" => Section::EnemyTypes,
                    "roles" => Section::Roles,
                    other => return Err(syntax(line_no, format!("unknown section `{other}`"))),
                });
                continue;
            }
            let sec = section.ok_or_else(|| syntax(line_no, "entry before any section header"))?;
            match sec {
                Section::EnemyTypes => {
                    if line.contains(',') || line.contains(char::is_whitespace) {
                        return Err(syntax(line_no, "enemy entries carry a single name"));
                    }
                    enemies.push((line_no, line.to_string()));
                }
                Section::Roles => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| syntax(line_no, "expected `key = value`"))?;
                    role_lines.push((line_no, key.trim().to_string(), value.trim().to_string()));
                }
                _ => {
                    let kind = match sec {
                        Section::UnitsBuildings => BuildKind::UnitOrBuilding,
                        Section::Technologies => BuildKind::Technology,
                        _ => BuildKind::Upgrade,
                    };
                    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
                    if parts.len() != 6 && parts.len() != 7 {
                        return Err(syntax(
                            line_no,
                            format!("expected 6 or 7 comma-separated fields, found {}", parts.len()),
                        ));
                    }
                    if parts[0].is_empty() || parts[0].contains(char::is_whitespace) {
                        return Err(syntax(line_no, "build name must be a single non-empty token"));
                    }
                    let mut fields = [0u32; 5];
                    for (slot, text) in fields.iter_mut().zip(&parts[1..6]) {
                        *slot = text
                            .parse()
                            .map_err(|_| syntax(line_no, format!("`{text}` is not a non-negative integer")))?;
                    }
                    let prereqs = parts
                        .get(6)
                        .map(|p| split_names(p).map(ToString::to_string).collect())
                        .unwrap_or_default();
                    let slot = match kind {
                        BuildKind::UnitOrBuilding => 0,
                        BuildKind::Technology => 1,
                        BuildKind::Upgrade => 2,
                    };
                    raw[slot].push(RawBuild { line: line_no, name: parts[0].to_string(), kind, fields, prereqs });
                }
            }
        }
        if !saw_content {
            return Err(syntax(1, "empty catalog"));
        }

        for (group, expected, found) in [
            ("own_units_buildings", UNITS_BUILDINGS, raw[0].len()),
            ("technologies", TECHNOLOGIES, raw[1].len()),
            ("upgrades", UPGRADES, raw[2].len()),
            ("enemy_types", ENEMY_TYPES, enemies.len()),
        ] {
            if expected != found {
                return Err(ParseError::Schema(format!("{group}: expected {expected}, found {found}")));
            }
        }

        let mut build_names = BTreeMap::new();
        for (i, rb) in raw.iter().flatten().enumerate() {
            if build_names.insert(rb.name.clone(), BuildId(i as u16)).is_some() {
                return Err(ParseError::Schema(format!("duplicate build `{}` (line {})", rb.name, rb.line)));
            }
        }
        let mut enemy_names = BTreeMap::new();
        for (i, (line, name)) in enemies.iter().enumerate() {
            if enemy_names.insert(name.clone(), EnemyTypeId(i as u16)).is_some() {
                return Err(ParseError::Schema(format!("duplicate enemy type `{name}` (line {line})")));
            }
        }

        let mut builds = Vec::with_capacity(OWN_BUILDS);
        for (i, rb) in raw.into_iter().flatten().enumerate() {
            let [mineral_cost, gas_cost, build_frames, supply_cost, supply_provided] = rb.fields;
            if build_frames == 0 {
                return Err(ParseError::Schema(format!("`{}`: build_frames must be at least 1", rb.name)));
            }
            if rb.kind != BuildKind::UnitOrBuilding && (supply_cost != 0 || supply_provided != 0) {
                return Err(ParseError::Schema(format!(
                    "`{}`: technologies and upgrades cannot cost or provide supply",
                    rb.name
                )));
            }
            let mut prerequisites = Vec::with_capacity(rb.prereqs.len());
            for p in &rb.prereqs {
                let id = build_names.get(p).copied().ok_or_else(|| {
                    ParseError::Schema(format!("`{}` (line {}): unknown prerequisite `{p}`", rb.name, rb.line))
                })?;
                prerequisites.push(id);
            }
            builds.push(BuildSpec {
                id: BuildId(i as u16),
                name: rb.name,
                kind: rb.kind,
                mineral_cost,
                gas_cost,
                build_frames,
                supply_cost,
                supply_provided,
                prerequisites,
            });
        }
        let enemies = enemies
            .into_iter()
            .enumerate()
            .map(|(i, (_, name))| EnemySpec { id: EnemyTypeId(i as u16), name })
            .collect();

        let roles = resolve_roles(&builds, &build_names, &role_lines)?;
        Ok(BuildCatalog { builds, enemies, roles, build_names, enemy_names })
    }

    /// The shipped Protoss-vs-Terran catalog.
    pub fn default_pvt() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn builds(&self) -> &[BuildSpec] {
        &self.builds
    }

    pub fn units_buildings(&self) -> &[BuildSpec] {
        &self.builds[..UNITS_BUILDINGS]
    }

    pub fn technologies(&self) -> &[BuildSpec] {
        &self.builds[UNITS_BUILDINGS..UNITS_BUILDINGS + TECHNOLOGIES]
    }

    pub fn upgrades(&self) -> &[BuildSpec] {
        &self.builds[UNITS_BUILDINGS + TECHNOLOGIES..]
    }

    pub fn enemy_types(&self) -> &[EnemySpec] {
        &self.enemies
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn worker(&self) -> BuildId {
        self.roles.worker
    }

    pub fn main_building(&self) -> BuildId {
        self.roles.main_building
    }

    pub fn build(&self, id: BuildId) -> Result<&BuildSpec, LookupError> {
        self.builds.get(id.index()).ok_or(LookupError::BuildId(id.index()))
    }

    /// Panicking accessor for ids already validated against this catalog.
    pub(crate) fn spec(&self, id: BuildId) -> &BuildSpec {
        &self.builds[id.index()]
    }

    pub fn enemy(&self, id: EnemyTypeId) -> Result<&EnemySpec, LookupError> {
        self.enemies.get(id.index()).ok_or(LookupError::EnemyId(id.index()))
    }

    pub fn build_id(&self, name: &str) -> Option<BuildId> {
        self.build_names.get(name).copied()
    }

    pub fn enemy_id(&self, name: &str) -> Option<EnemyTypeId> {
        self.enemy_names.get(name).copied()
    }

    pub fn lookup_build(&self, name: &str) -> Result<BuildId, LookupError> {
        self.build_id(name).ok_or_else(|| LookupError::BuildName(name.to_string()))
    }

    pub fn lookup_enemy(&self, name: &str) -> Result<EnemyTypeId, LookupError> {
        self.enemy_id(name).ok_or_else(|| LookupError::EnemyName(name.to_string()))
    }

    /// Position of a build in the output layer (and own-count block).
    pub fn output_index(&self, id: BuildId) -> Result<usize, LookupError> {
        self.build(id).map(|spec| spec.id.index())
    }

    pub fn is_structure(&self, id: BuildId) -> bool {
        self.roles.structures.get(id.index()).copied().unwrap_or(false)
    }

    /// Non-worker, non-structure units: the material counted as army.
    pub fn is_army_unit(&self, id: BuildId) -> bool {
        let spec = self.spec(id);
        spec.kind == BuildKind::UnitOrBuilding && !self.is_structure(id) && id != self.roles.worker
    }

    /// Canonical text form; parsing it yields an equal catalog.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let groups = [
            ("units_buildings", self.units_buildings()),
            ("technologies", self.technologies()),
            ("upgrades", self.upgrades()),
        ];
        for (i, (header, specs)) in groups.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{header}]");
            for s in *specs {
                let prereqs: Vec<&str> = s.prerequisites.iter().map(|p| self.spec(*p).name.as_str()).collect();
                let _ = writeln!(
                    out,
                    "{}, {}, {}, {}, {}, {}, {}",
                    s.name,
                    s.mineral_cost,
                    s.gas_cost,
                    s.build_frames,
                    s.supply_cost,
                    s.supply_provided,
                    prereqs.join("|")
                );
            }
        }
        out.push_str("\n[enemy_types]\n");
        for e in &self.enemies {
            let _ = writeln!(out, "{}", e.name);
        }
        out.push_str("\n[roles]\n");
        let _ = writeln!(out, "worker = {}", self.spec(self.roles.worker).name);
        let _ = writeln!(out, "main_building = {}", self.spec(self.roles.main_building).name);
        if let Some(gas) = self.roles.gas_building {
            let _ = writeln!(out, "gas_building = {}", self.spec(gas).name);
        }
        let structures: Vec<&str> = self
            .builds
            .iter()
            .filter(|b| self.is_structure(b.id))
            .map(|b| b.name.as_str())
            .collect();
        let _ = writeln!(out, "structures = {}", structures.join("|"));
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

fn resolve_roles(
    builds: &[BuildSpec],
    names: &BTreeMap<String, BuildId>,
    lines: &[(usize, String, String)],
) -> Result<Roles, ParseError> {
    let lookup = |line: usize, name: &str| -> Result<BuildId, ParseError> {
        let id = names
            .get(name)
            .copied()
            .ok_or_else(|| ParseError::Schema(format!("roles (line {line}): unknown build `{name}`")))?;
        if builds[id.index()].kind != BuildKind::UnitOrBuilding {
            return Err(ParseError::Schema(format!("roles (line {line}): `{name}` is not a unit or building")));
        }
        Ok(id)
    };
    let mut worker = None;
    let mut main_building = None;
    let mut gas_building = None;
    let mut structures: Option<Vec<bool>> = None;
    for (line, key, value) in lines {
        match key.as_str() {
            "worker" => worker = Some(lookup(*line, value)?),
            "main_building" => main_building = Some(lookup(*line, value)?),
            "gas_building" => gas_building = Some(lookup(*line, value)?),
            "structures" => {
                let mut flags = alloc::vec![false; builds.len()];
                for name in split_names(value) {
                    flags[lookup(*line, name)?.index()] = true;
                }
                structures = Some(flags);
            }
            other => return Err(syntax(*line, format!("unknown role `{other}`"))),
        }
    }

    let worker = worker.unwrap_or(BuildId(0));
    let main_building = match main_building {
        Some(id) => id,
        None => builds
            .iter()
            .find(|b| b.kind == BuildKind::UnitOrBuilding && b.supply_provided > 0 && b.prerequisites.is_empty())
            .map(|b| b.id)
            .ok_or_else(|| ParseError::Schema("roles: no main building could be inferred".into()))?,
    };
    let structures = structures.unwrap_or_else(|| infer_structures(builds));
    Ok(Roles { worker, main_building, gas_building, structures })
}

/// Supply-free material whose prerequisites are themselves structures.
fn infer_structures(builds: &[BuildSpec]) -> Vec<bool> {
    let mut flags = alloc::vec![false; builds.len()];
    // Prerequisites may point forward in file order; iterate to a fixpoint.
    loop {
        let mut changed = false;
        for b in builds.iter().filter(|b| b.kind == BuildKind::UnitOrBuilding) {
            let is = b.supply_cost == 0 && b.prerequisites.iter().all(|p| flags[p.index()]);
            if is && !flags[b.id.index()] {
                flags[b.id.index()] = true;
                changed = true;
            }
        }
        if !changed {
            return flags;
        }
    }
}
