//! Per-feature normalization caps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::catalog::{BuildCatalog, ENEMY_TYPES, OWN_BUILDS};
use crate::error::ParseError;

pub const DEFAULT_NORMS: &str = include_str!("../data/default.norms");

/// Divisors applied before clamping counts into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationTable {
    pub own: Vec<f64>,
    pub in_production: Vec<f64>,
    pub enemy: Vec<f64>,
    pub supply: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Own,
    InProduction,
    Enemy,
    Supply,
}

impl NormalizationTable {
    /// Parses `[own]`, `[in_production]`, `[enemy]` (every catalog name exactly
    /// once, `name, cap`) and `[supply]` (`cap, <value>`).
    pub fn parse(text: &str, catalog: &BuildCatalog) -> Result<Self, ParseError> {
        let mut own = vec![None; OWN_BUILDS];
        let mut in_production = vec![None; OWN_BUILDS];
        let mut enemy = vec![None; ENEMY_TYPES];
        let mut supply = None;
        let mut section = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ParseError::Syntax { line: line_no, message };
            if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "own" => Section::Own,
                    "in_production" => Section::InProduction,
                    "enemy" => Section::Enemy,
                    "supply" => Section::Supply,
                    other => return Err(syntax(format!("unknown section `{other}`"))),
                });
                continue;
            }
            let (name, cap) = line.split_once(',').ok_or_else(|| syntax("expected `name, cap`".into()))?;
            let (name, cap) = (name.trim(), cap.trim());
            let cap: f64 = cap.parse().map_err(|_| syntax(format!("bad cap `{cap}`")))?;
            if !(cap.is_finite() && cap > 0.0) {
                return Err(syntax(format!("cap must be positive, got {cap}")));
            }
            let slot = match section.ok_or_else(|| syntax("entry before any section header".into()))? {
                Section::Own | Section::InProduction => {
                    let id = catalog
                        .build_id(name)
                        .ok_or_else(|| syntax(format!("unknown build `{name}`")))?;
                    let table = if section == Some(Section::Own) { &mut own } else { &mut in_production };
                    &mut table[id.index()]
                }
                Section::Enemy => {
                    let id = catalog
                        .enemy_id(name)
                        .ok_or_else(|| syntax(format!("unknown enemy type `{name}`")))?;
                    &mut enemy[id.index()]
                }
                Section::Supply => {
                    if name != "cap" {
                        return Err(syntax(format!("unknown supply key `{name}`")));
                    }
                    &mut supply
                }
            };
            if slot.replace(cap).is_some() {
                return Err(syntax(format!("duplicate entry `{name}`")));
            }
        }
        let complete = |group: &str, table: Vec<Option<f64>>| -> Result<Vec<f64>, ParseError> {
            let missing = table.iter().filter(|c| c.is_none()).count();
            if missing > 0 {
                return Err(ParseError::Schema(format!("{group}: {missing} entries missing")));
            }
            Ok(table.into_iter().flatten().collect())
        };
        Ok(NormalizationTable {
            own: complete("own", own)?,
            in_production: complete("in_production", in_production)?,
            enemy: complete("enemy", enemy)?,
            supply: supply.ok_or_else(|| ParseError::Schema("supply: cap missing".into()))?,
        })
    }

    /// The shipped caps for the default catalog.
    pub fn default_for(catalog: &BuildCatalog) -> Self {
        Self::parse(DEFAULT_NORMS, catalog).expect("shipped normalization table matches the catalog")
    }

    pub fn to_text(&self, catalog: &BuildCatalog) -> String {
        let mut out = String::new();
        for (header, caps) in [("own", &self.own), ("in_production", &self.in_production)] {
            let _ = writeln!(out, "[{header}]");
            for (b, cap) in catalog.builds().iter().zip(caps) {
                let _ = writeln!(out, "{}, {cap}", b.name);
            }
            out.push('\n');
        }
        out.push_str("[enemy]\n");
        for (e, cap) in catalog.enemy_types().iter().zip(&self.enemy) {
            let _ = writeln!(out, "{}, {cap}", e.name);
        }
        let _ = write!(out, "\n[supply]\ncap, {}\n", self.supply);
        out
    }

    pub fn content_hash(&self, catalog: &BuildCatalog) -> [u8; 32] {
        Sha256::digest(self.to_text(catalog).as_bytes()).into()
    }
}
