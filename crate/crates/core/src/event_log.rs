//! Line-oriented per-game event files.
//!
//! ```text
//! game <id>
//! <frame> produced <own build>
//! <frame> destroyed <own build>
//! <frame> observed <enemy type>
//! ```
//!
//! Frames never decrease. Any build name outside the catalog rejects the
//! whole game: a Protoss log that produces Terran material has been
//! polluted by mind control and is unusable for imitation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::catalog::{BuildCatalog, BuildId, EnemyTypeId};
use crate::error::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventKind {
    Produced(BuildId),
    Destroyed(BuildId),
    EnemyObserved(EnemyTypeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GameEvent {
    pub frame: u64,
    pub kind: EventKind,
}

impl GameEvent {
    pub fn produced(frame: u64, id: BuildId) -> Self {
        GameEvent { frame, kind: EventKind::Produced(id) }
    }

    pub fn destroyed(frame: u64, id: BuildId) -> Self {
        GameEvent { frame, kind: EventKind::Destroyed(id) }
    }

    pub fn observed(frame: u64, id: EnemyTypeId) -> Self {
        GameEvent { frame, kind: EventKind::EnemyObserved(id) }
    }
}

/// One player's view of one game, events in non-decreasing frame order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EventLog {
    pub game_id: String,
    pub events: Vec<GameEvent>,
}

impl EventLog {
    pub fn new(game_id: impl Into<String>) -> Self {
        EventLog { game_id: game_id.into(), events: Vec::new() }
    }

    pub fn produced_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Produced(_))).count()
    }

    /// Checks ordering, id ranges and that the id survives a write/parse cycle.
    pub fn validate(&self, catalog: &BuildCatalog) -> Result<(), ParseError> {
        if !valid_game_id(&self.game_id) {
            return Err(ParseError::Syntax { line: 1, message: format!("invalid game id `{}`", self.game_id) });
        }
        let mut previous = 0;
        for (i, e) in self.events.iter().enumerate() {
            let line = i + 2;
            if e.frame < previous {
                return Err(ParseError::Order { line, frame: e.frame, previous });
            }
            previous = e.frame;
            match e.kind {
                EventKind::Produced(id) | EventKind::Destroyed(id) => {
                    if catalog.build(id).is_err() {
                        return Err(ParseError::UnknownBuild { line, name: format!("#{}", id.0) });
                    }
                }
                EventKind::EnemyObserved(id) => {
                    if catalog.enemy(id).is_err() {
                        return Err(ParseError::UnknownEnemy { line, name: format!("#{}", id.0) });
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses one event file. Either the whole log is returned or an error.
    pub fn parse(text: &str, catalog: &BuildCatalog) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| ParseError::Syntax { line: 1, message: "missing `game <id>` header".into() })?;
        let game_id = header
            .strip_prefix("game")
            .filter(|rest| rest.starts_with(char::is_whitespace))
            .map(str::trim)
            .filter(|id| valid_game_id(id))
            .ok_or_else(|| ParseError::Syntax { line: header_line, message: "expected `game <id>` header".into() })?;

        let mut events = Vec::new();
        let mut previous = 0u64;
        for (line, text) in lines {
            let mut fields = text.split_whitespace();
            let (Some(frame), Some(kind), Some(name), None) = (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(ParseError::Syntax { line, message: "expected `<frame> <kind> <name>`".into() });
            };
            let frame: u64 = frame
                .parse()
                .map_err(|_| ParseError::Syntax { line, message: format!("bad frame `{frame}`") })?;
            if frame < previous {
                return Err(ParseError::Order { line, frame, previous });
            }
            previous = frame;
            let own = |name: &str| {
                catalog.build_id(name).ok_or_else(|| ParseError::UnknownBuild { line, name: name.to_string() })
            };
            let kind = match kind {
                "produced" => EventKind::Produced(own(name)?),
                "destroyed" => EventKind::Destroyed(own(name)?),
                "observed" => EventKind::EnemyObserved(
                    catalog
                        .enemy_id(name)
                        .ok_or_else(|| ParseError::UnknownEnemy { line, name: name.to_string() })?,
                ),
                other => return Err(ParseError::Syntax { line, message: format!("unknown event kind `{other}`") }),
            };
            events.push(GameEvent { frame, kind });
        }
        Ok(EventLog { game_id: game_id.to_string(), events })
    }

    /// Canonical text form; bit-deterministic.
    pub fn to_text(&self, catalog: &BuildCatalog) -> String {
        let mut out = String::with_capacity(16 + self.events.len() * 24);
        let _ = writeln!(out, "game {}", self.game_id);
        for e in &self.events {
            let (kind, name) = match e.kind {
                EventKind::Produced(id) => ("produced", catalog.spec(id).name.as_str()),
                EventKind::Destroyed(id) => ("destroyed", catalog.spec(id).name.as_str()),
                EventKind::EnemyObserved(id) => ("observed", catalog.enemy_types()[id.index()].name.as_str()),
            };
            let _ = writeln!(out, "{} {} {}", e.frame, kind, name);
        }
        out
    }
}

fn valid_game_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(['\n', '\r']) && id.trim() == id
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> BuildCatalog {
        BuildCatalog::default_pvt()
    }

    #[test]
    fn parses_produced_line() {
        let c = cat();
        let log = EventLog::parse("game g1\n120 produced zealot\n", &c).unwrap();
        assert_eq!(log.game_id, "g1");
        assert_eq!(log.events, [GameEvent::produced(120, c.build_id("zealot").unwrap())]);
    }

    #[test]
    fn terran_build_in_protoss_log_is_rejected() {
        let err = EventLog::parse("game mc\n10 produced probe\n500 produced scv\n", &cat()).unwrap_err();
        assert_eq!(err, ParseError::UnknownBuild { line: 3, name: "scv".into() });
    }

    #[test]
    fn decreasing_frames_rejected() {
        let err = EventLog::parse("game g\n50 produced probe\n40 produced probe\n", &cat()).unwrap_err();
        assert_eq!(err, ParseError::Order { line: 3, frame: 40, previous: 50 });
    }

    #[test]
    fn malformed_lines_rejected() {
        let c = cat();
        for bad in ["game g\n10 produced\n", "game g\nx produced probe\n", "game g\n1 built probe\n", "gamer g\n"] {
            assert!(matches!(EventLog::parse(bad, &c), Err(ParseError::Syntax { .. })), "{bad}");
        }
        assert!(matches!(EventLog::parse("", &c), Err(ParseError::Syntax { line: 1, .. })));
    }

    #[test]
    fn empty_log_writes_header_only() {
        assert_eq!(EventLog::new("empty").to_text(&cat()), "game empty\n");
    }

    #[test]
    fn equal_ties_keep_file_order() {
        let c = cat();
        let text = "game t\n5 observed marine\n5 produced probe\n5 destroyed probe\n";
        let log = EventLog::parse(text, &c).unwrap();
        assert_eq!(log.to_text(&c), text);
        assert_eq!(log.produced_count(), 1);
    }
}
