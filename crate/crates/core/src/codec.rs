//! Wire commands and timed command streams.
//!
//! A command is a 16-bit signed word:
//!
//! ```text
//!  15 14 | 13 ............ 4 | 3 .. 0
//!  pol   | cube id (1..1023) | em id (1..12)
//! ```
//!
//! Polarity code `00` is OFF, `01` is +1, `10` is -1 and `11` is reserved, so
//! every negative word drives an electromagnet in the -1 sense.
//!
//! PWM configuration travels as a header word with em nibble `0xF` (never a
//! valid command) and the cube id in bits 4..=13, followed by a duty word.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{CubeId, EdgeId};
use crate::planner::{EmAssignment, ManeuverPlan, PhaseKind, PhaseTimings, Polarity};

/// Transmission time of one radio message.
pub const MESSAGE_SLOT_MS: u32 = 20;

const PWM_MARKER: u16 = 0xF;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("{field} = {value} out of range")]
    OutOfRange { field: &'static str, value: i64 },
    #[error("malformed command word {raw:#06x}: {reason}")]
    Malformed { raw: u16, reason: &'static str },
    #[error("{phase:?} phase needs {needed_ms} ms for its commands but lasts {available_ms} ms")]
    TimelineOverflow { phase: PhaseKind, needed_ms: u32, available_ms: u32 },
    #[error("timeline entry {index} violates the {MESSAGE_SLOT_MS} ms spacing")]
    Spacing { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("truncated binary timeline")]
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Command16(i16);

impl Command16 {
    pub fn from_raw(raw: i16) -> Self {
        Command16(raw)
    }

    pub fn raw(self) -> i16 {
        self.0
    }

    pub fn bits(self) -> u16 {
        self.0 as u16
    }
}

impl fmt::Display for Command16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.bits())
    }
}

fn polarity_code(p: Polarity) -> u16 {
    match p {
        Polarity::Off => 0b00,
        Polarity::Plus => 0b01,
        Polarity::Minus => 0b10,
    }
}

pub fn encode(a: &EmAssignment) -> Command16 {
    let bits = a.em.get() as u16 | (a.cube.get() << 4) | (polarity_code(a.polarity) << 14);
    Command16(bits as i16)
}

/// Encode unchecked integer fields.
pub fn encode_fields(cube: u32, em: u8, polarity: i8) -> Result<Command16, CodecError> {
    let cube = CubeId::new(cube)
        .map_err(|_| CodecError::OutOfRange { field: "cube id", value: cube as i64 })?;
    let em = EdgeId::new(em)
        .map_err(|_| CodecError::OutOfRange { field: "electromagnet id", value: em as i64 })?;
    let polarity = Polarity::from_value(polarity)
        .ok_or(CodecError::OutOfRange { field: "polarity", value: polarity as i64 })?;
    Ok(encode(&EmAssignment { cube, em, polarity }))
}

pub fn decode(raw: i16) -> Result<EmAssignment, CodecError> {
    let bits = raw as u16;
    let malformed = |reason| CodecError::Malformed { raw: bits, reason };
    let em = EdgeId::new((bits & 0xF) as u8).map_err(|_| malformed("electromagnet id"))?;
    let cube = CubeId::new(((bits >> 4) & 0x3FF) as u32).map_err(|_| malformed("cube id"))?;
    let polarity = match bits >> 14 {
        0b00 => Polarity::Off,
        0b01 => Polarity::Plus,
        0b10 => Polarity::Minus,
        _ => return Err(malformed("reserved polarity code")),
    };
    Ok(EmAssignment { cube, em, polarity })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PwmConfig {
    pub cube: CubeId,
    pub duty: u8,
}

impl PwmConfig {
    pub fn header_word(&self) -> u16 {
        PWM_MARKER | (self.cube.get() << 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Command { word: Command16 },
    Pwm { config: PwmConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub t_ms: u32,
    pub message: Message,
}

/// Bounds of one compiled maneuver inside a timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineSegment {
    /// First command of the maneuver.
    pub start_ms: u32,
    /// End of the last phase; the all-OFF epilogue starts here.
    pub release_ms: u32,
    /// Time the last message of the segment finishes transmitting.
    pub end_ms: u32,
}

impl TimelineSegment {
    /// Duration of the energized maneuver, launch through catch.
    pub fn span_ms(&self) -> u32 {
        self.release_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommandTimeline {
    pub entries: Vec<TimelineEntry>,
    pub segments: Vec<TimelineSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BroadcastMode {
    /// Only electromagnets whose polarity changes at a phase boundary.
    #[default]
    Delta,
    /// Re-send every active electromagnet at each boundary.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompileOptions {
    pub mode: BroadcastMode,
    /// When set, each participating cube is sent this PWM duty before launch.
    pub pwm_duty: Option<u8>,
}

type ActiveSet = BTreeMap<(CubeId, EdgeId), Polarity>;

fn command(t_ms: u32, cube: CubeId, em: EdgeId, polarity: Polarity) -> TimelineEntry {
    TimelineEntry {
        t_ms,
        message: Message::Command { word: encode(&EmAssignment { cube, em, polarity }) },
    }
}

/// Compile with delta broadcasting and no PWM preamble.
pub fn compile_timeline(
    plan: &ManeuverPlan,
    timings: &PhaseTimings,
) -> Result<CommandTimeline, CodecError> {
    compile_timeline_with(plan, timings, CompileOptions::default())
}

/// Turn a plan into timed commands. Commands at each phase boundary are
/// serialized one slot apart from the phase start; after the last phase every
/// electromagnet still on is switched OFF.
pub fn compile_timeline_with(
    plan: &ManeuverPlan,
    timings: &PhaseTimings,
    options: CompileOptions,
) -> Result<CommandTimeline, CodecError> {
    let durations = timings.for_kind(plan.kind);
    let mut entries = Vec::new();
    let mut active = ActiveSet::new();
    let mut phase_start = 0u32;

    for (i, phase) in plan.phases.iter().enumerate() {
        let duration = durations.get(phase.kind);
        let desired: ActiveSet = phase
            .assignments
            .iter()
            .filter(|a| a.polarity != Polarity::Off)
            .map(|a| ((a.cube, a.em), plan.body_polarity(a)))
            .collect();

        let mut messages: Vec<Message> = Vec::new();
        if i == 0 {
            if let Some(duty) = options.pwm_duty {
                let mut cubes: Vec<CubeId> = desired.keys().map(|k| k.0).collect();
                for p in &plan.phases {
                    cubes.extend(p.assignments.iter().map(|a| a.cube));
                }
                cubes.sort();
                cubes.dedup();
                messages.extend(cubes.into_iter().map(|cube| Message::Pwm { config: PwmConfig { cube, duty } }));
            }
        }
        for (&(cube, em), _) in active.iter().filter(|(k, _)| !desired.contains_key(k)) {
            messages.push(Message::Command {
                word: encode(&EmAssignment { cube, em, polarity: Polarity::Off }),
            });
        }
        for (&(cube, em), &polarity) in &desired {
            let changed = active.get(&(cube, em)) != Some(&polarity);
            if changed || options.mode == BroadcastMode::Full {
                messages.push(Message::Command { word: encode(&EmAssignment { cube, em, polarity }) });
            }
        }

        let needed = messages.len() as u32 * MESSAGE_SLOT_MS;
        if needed > duration {
            return Err(CodecError::TimelineOverflow {
                phase: phase.kind,
                needed_ms: needed,
                available_ms: duration,
            });
        }
        for (k, message) in messages.into_iter().enumerate() {
            entries.push(TimelineEntry { t_ms: phase_start + k as u32 * MESSAGE_SLOT_MS, message });
        }
        active = desired;
        phase_start += duration;
    }

    let release_ms = phase_start;
    for (k, (&(cube, em), _)) in active.iter().enumerate() {
        entries.push(command(release_ms + k as u32 * MESSAGE_SLOT_MS, cube, em, Polarity::Off));
    }

    let segments = match (entries.first(), entries.last()) {
        (Some(first), Some(last)) => vec![TimelineSegment {
            start_ms: first.t_ms,
            release_ms,
            end_ms: last.t_ms + MESSAGE_SLOT_MS,
        }],
        _ => Vec::new(),
    };
    Ok(CommandTimeline { entries, segments })
}

impl CommandTimeline {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Strictly increasing times with at least one message slot between entries.
    pub fn validate(&self) -> Result<(), CodecError> {
        for (i, pair) in self.entries.windows(2).enumerate() {
            if pair[1].t_ms < pair[0].t_ms + MESSAGE_SLOT_MS {
                return Err(CodecError::Spacing { index: i + 1 });
            }
        }
        Ok(())
    }

    /// Append `other` shifted so it begins `gap_ms` after this timeline's last
    /// message finishes.
    pub fn append(&mut self, other: &CommandTimeline, gap_ms: u32) {
        let offset = match self.segments.last() {
            Some(s) => s.end_ms + gap_ms,
            None => self.entries.last().map(|e| e.t_ms + MESSAGE_SLOT_MS + gap_ms).unwrap_or(0),
        };
        self.entries.extend(other.entries.iter().map(|e| TimelineEntry { t_ms: e.t_ms + offset, ..*e }));
        self.segments.extend(other.segments.iter().map(|s| TimelineSegment {
            start_ms: s.start_ms + offset,
            release_ms: s.release_ms + offset,
            end_ms: s.end_ms + offset,
        }));
    }

    /// Decoded command assignments in time order (PWM entries skipped).
    pub fn commands(&self) -> impl Iterator<Item = (u32, EmAssignment)> + '_ {
        self.entries.iter().filter_map(|e| match e.message {
            Message::Command { word } => decode(word.raw()).ok().map(|a| (e.t_ms, a)),
            Message::Pwm { .. } => None,
        })
    }

    /// One record per line: `t_ms 0xWORD` or, for PWM, `t_ms 0xHEADER 0xDUTY`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# voxmag command timeline v1\n");
        for e in &self.entries {
            match e.message {
                Message::Command { word } => out.push_str(&format!("{} {:#06x}\n", e.t_ms, word.bits())),
                Message::Pwm { config } => out.push_str(&format!(
                    "{} {:#06x} {:#06x}\n",
                    e.t_ms,
                    config.header_word(),
                    config.duty
                )),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<CommandTimeline, CodecError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CodecError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let t_ms: u32 = fields[0].parse().map_err(|e| err(format!("time: {e}")))?;
            let hex = |s: &str| {
                u16::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|e| err(format!("word: {e}")))
            };
            let word = hex(fields.get(1).ok_or_else(|| err("missing word".into()))?)?;
            let message = match fields.len() {
                2 => Message::Command { word: Command16(word as i16) },
                3 => pwm_from_words(word, hex(fields[2])?).map_err(|e| err(e.to_string()))?,
                _ => return Err(err("expected 2 or 3 fields".into())),
            };
            entries.push(TimelineEntry { t_ms, message });
        }
        Ok(CommandTimeline { entries, segments: Vec::new() })
    }

    /// Little-endian records: `u32 t_ms`, `u16 word`, plus `u16 duty` after a PWM header.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            w.write_all(&e.t_ms.to_le_bytes())?;
            match e.message {
                Message::Command { word } => w.write_all(&word.bits().to_le_bytes())?,
                Message::Pwm { config } => {
                    w.write_all(&config.header_word().to_le_bytes())?;
                    w.write_all(&(config.duty as u16).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.entries.len() * 6);
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<CommandTimeline, CodecError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|_| CodecError::Truncated)?;
        let mut entries = Vec::new();
        let mut i = 0;
        let u16_at = |i: usize| -> Result<u16, CodecError> {
            bytes.get(i..i + 2).map(|b| u16::from_le_bytes([b[0], b[1]])).ok_or(CodecError::Truncated)
        };
        while i < bytes.len() {
            let t = bytes.get(i..i + 4).ok_or(CodecError::Truncated)?;
            let t_ms = u32::from_le_bytes([t[0], t[1], t[2], t[3]]);
            let word = u16_at(i + 4)?;
            i += 6;
            let message = if word & 0xF == PWM_MARKER {
                let duty = u16_at(i)?;
                i += 2;
                pwm_from_words(word, duty)?
            } else {
                Message::Command { word: Command16(word as i16) }
            };
            entries.push(TimelineEntry { t_ms, message });
        }
        Ok(CommandTimeline { entries, segments: Vec::new() })
    }
}

fn pwm_from_words(header: u16, duty: u16) -> Result<Message, CodecError> {
    if header & 0xF != PWM_MARKER || header >> 14 != 0 {
        return Err(CodecError::Malformed { raw: header, reason: "not a PWM header" });
    }
    let cube = CubeId::new(((header >> 4) & 0x3FF) as u32)
        .map_err(|_| CodecError::Malformed { raw: header, reason: "cube id" })?;
    let duty = u8::try_from(duty).map_err(|_| CodecError::OutOfRange { field: "duty", value: duty as i64 })?;
    Ok(Message::Pwm { config: PwmConfig { cube, duty } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Axis, Cube, GridAddress, LatticeState};
    use crate::planner::{resolve_maneuver, Direction, ManeuverRequest};

    fn assign(cube: u32, em: u8, polarity: Polarity) -> EmAssignment {
        EmAssignment { cube: CubeId::new(cube).unwrap(), em: EdgeId::new(em).unwrap(), polarity }
    }

    #[test]
    fn layout_examples() {
        assert_eq!(encode(&assign(1, 1, Polarity::Off)).bits(), 0x0011);
        assert_eq!(encode(&assign(1, 1, Polarity::Plus)).bits(), 0x4011);
        let c = encode(&assign(1023, 12, Polarity::Minus));
        assert_eq!(c.bits(), 0x8000 | (1023 << 4) | 12);
        assert_eq!(c.bits(), 0xBFFC);
        assert_eq!(c.raw(), -16388);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(0x4011).unwrap(), assign(1, 1, Polarity::Plus));
        assert!(matches!(decode(0), Err(CodecError::Malformed { reason: "electromagnet id", .. })));
        assert!(matches!(decode(0x0001), Err(CodecError::Malformed { reason: "cube id", .. })));
        assert!(matches!(decode(0xC011u16 as i16), Err(CodecError::Malformed { .. })));
        assert!(matches!(decode(0x001D), Err(CodecError::Malformed { .. })));
    }

    #[test]
    fn field_range_errors() {
        assert!(encode_fields(0, 1, 0).is_err());
        assert!(encode_fields(1024, 1, 0).is_err());
        assert!(encode_fields(1, 13, 0).is_err());
        assert!(encode_fields(1, 1, 2).is_err());
        assert_eq!(encode_fields(1, 1, 1).unwrap().bits(), 0x4011);
    }

    fn two_cube_plan() -> ManeuverPlan {
        let s = LatticeState::from_cubes([
            Cube::new(CubeId::new(1).unwrap(), GridAddress::new(0, 0, 0)),
            Cube::new(CubeId::new(2).unwrap(), GridAddress::new(0, 0, 1)),
        ])
        .unwrap();
        resolve_maneuver(&s, &ManeuverRequest::new(CubeId::new(2).unwrap(), Axis::Y, Direction::Ccw)).unwrap()
    }

    #[test]
    fn pivot_timeline_shape() {
        let plan = two_cube_plan();
        let tl = compile_timeline(&plan, &PhaseTimings::default()).unwrap();
        let times: Vec<u32> = tl.entries.iter().map(|e| e.t_ms).collect();
        // Launch: 4 on. Travel: repel pair off. Catch: hinge off + catch on. Release: catch off.
        assert_eq!(times, vec![0, 20, 40, 60, 400, 420, 1330, 1350, 1370, 1390, 1530, 1550]);
        tl.validate().unwrap();
        assert_eq!(tl.segments[0].span_ms(), 1530);
        let mut last = BTreeMap::new();
        for (_, a) in tl.commands() {
            last.insert((a.cube, a.em), a.polarity);
        }
        assert!(last.values().all(|p| *p == Polarity::Off));
    }

    #[test]
    fn full_broadcast_resends() {
        let plan = two_cube_plan();
        let opts = CompileOptions { mode: BroadcastMode::Full, pwm_duty: Some(200) };
        let tl = compile_timeline_with(&plan, &PhaseTimings::default(), opts).unwrap();
        tl.validate().unwrap();
        // 2 PWM + 4 on; 2 off + 2 hinge again; 2 off + 2 on; 2 off.
        assert_eq!(tl.len(), 6 + 4 + 4 + 2);
        let text = tl.to_text();
        assert_eq!(CommandTimeline::from_text(&text).unwrap().entries, tl.entries);
        let bin = tl.to_binary();
        assert_eq!(CommandTimeline::read_binary(&bin[..]).unwrap().entries, tl.entries);
        assert!(matches!(
            CommandTimeline::read_binary(&bin[..bin.len() - 1]),
            Err(CodecError::Truncated)
        ));
    }

    #[test]
    fn overflow_when_phase_too_short() {
        let plan = two_cube_plan();
        let mut t = PhaseTimings::default();
        t.pivot.launch_ms = 60;
        assert!(matches!(
            compile_timeline(&plan, &t),
            Err(CodecError::TimelineOverflow { phase: PhaseKind::Launch, needed_ms: 80, available_ms: 60 })
        ));
    }

    #[test]
    fn empty_plan_is_empty_timeline() {
        let mut plan = two_cube_plan();
        plan.phases.clear();
        let tl = compile_timeline(&plan, &PhaseTimings::default()).unwrap();
        assert!(tl.is_empty());
        assert!(tl.segments.is_empty());
    }

    #[test]
    fn text_parse_errors_carry_line() {
        let err = CommandTimeline::from_text("# header\n0 0x4011\nabc 0x1\n").unwrap_err();
        assert!(matches!(err, CodecError::Parse { line: 3, .. }));
    }
}
