//! Serialize a slice of a song back to a playable format-0 SMF.

use super::vlq;
use super::{malformed, MidiError, MidiSong};

/// What goes into the output track, ordered at equal ticks so tempo applies
/// first and note-offs land before retriggers.
#[derive(Clone, Copy)]
enum OutEvent {
    Tempo(u32),
    NoteOff { channel: u8, note: u8 },
    NoteOn { channel: u8, note: u8, velocity: u8 },
}

impl OutEvent {
    fn class(&self) -> u8 {
        match self {
            OutEvent::Tempo(_) => 0,
            OutEvent::NoteOff { .. } => 1,
            OutEvent::NoteOn { .. } => 2,
        }
    }
}

/// Write the inclusive event range `step_range` of `song` as a format-0 SMF.
///
/// Ticks are rebased so the first selected event sits at tick 0. The tempo in
/// effect at the segment start is emitted at tick 0 along with any changes
/// inside the range. Each note-on gets a matching note-off one quarter note
/// later so the output is audible. Re-parsing the output yields the same
/// (channel, note, velocity) sequence with the same inter-event tick deltas.
pub fn write_segment_midi(
    song: &MidiSong,
    step_range: (usize, usize),
) -> Result<Vec<u8>, MidiError> {
    let (start, end) = step_range;
    if start > end {
        return Err(MidiError::EmptySegment);
    }
    if song.events.is_empty() || end >= song.events.len() {
        return Err(MidiError::RangeOutOfBounds {
            start,
            end,
            len: song.events.len(),
        });
    }

    let base_tick = song.events[start].tick;
    let last_tick = song.events[end].tick;

    let mut out: Vec<(u64, OutEvent)> = Vec::with_capacity((end - start + 1) * 2 + 2);
    out.push((0, OutEvent::Tempo(song.tempo_at(base_tick))));
    for tc in &song.tempo_map {
        if tc.tick > base_tick && tc.tick <= last_tick {
            out.push((tc.tick - base_tick, OutEvent::Tempo(tc.tempo)));
        }
    }
    for event in &song.events[start..=end] {
        let tick = event.tick - base_tick;
        out.push((
            tick,
            OutEvent::NoteOn {
                channel: event.channel,
                note: event.note,
                velocity: event.velocity,
            },
        ));
        out.push((
            tick + song.division as u64,
            OutEvent::NoteOff {
                channel: event.channel,
                note: event.note,
            },
        ));
    }
    out.sort_by_key(|(tick, ev)| (*tick, ev.class()));

    let mut body = Vec::new();
    let mut prev_tick = 0u64;
    for (tick, ev) in &out {
        let delta = tick - prev_tick;
        if delta > vlq::MAX as u64 {
            return Err(malformed(
                0,
                format!("tick delta {delta} too large for a VLQ"),
            ));
        }
        body.extend_from_slice(&vlq::encode(delta as u32));
        prev_tick = *tick;
        match ev {
            OutEvent::Tempo(tempo) => {
                body.extend_from_slice(&[0xff, 0x51, 0x03]);
                body.extend_from_slice(&tempo.to_be_bytes()[1..]);
            }
            OutEvent::NoteOff { channel, note } => {
                body.extend_from_slice(&[0x80 | channel, *note, 0x40]);
            }
            OutEvent::NoteOn {
                channel,
                note,
                velocity,
            } => {
                body.extend_from_slice(&[0x90 | channel, *note, *velocity]);
            }
        }
    }
    body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);

    let mut bytes = Vec::with_capacity(14 + 8 + body.len());
    bytes.extend_from_slice(b"MThd");
    bytes.extend_from_slice(&6u32.to_be_bytes());
    bytes.extend_from_slice(&0u16.to_be_bytes());
    bytes.extend_from_slice(&1u16.to_be_bytes());
    bytes.extend_from_slice(&song.division.to_be_bytes());
    bytes.extend_from_slice(b"MTrk");
    bytes.extend_from_slice(&(body.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&body);
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{parse_smf, MidiEvent, ParseOptions, TempoChange};

    fn song() -> MidiSong {
        MidiSong {
            division: 480,
            events: vec![
                MidiEvent {
                    tick: 100,
                    channel: 0,
                    note: 60,
                    velocity: 90,
                },
                MidiEvent {
                    tick: 340,
                    channel: 2,
                    note: 64,
                    velocity: 80,
                },
                MidiEvent {
                    tick: 900,
                    channel: 0,
                    note: 67,
                    velocity: 70,
                },
            ],
            tempo_map: vec![
                TempoChange {
                    tick: 0,
                    tempo: 500_000,
                },
                TempoChange {
                    tick: 600,
                    tempo: 250_000,
                },
            ],
            source_id: "w".into(),
        }
    }

    #[test]
    fn full_range_round_trip_preserves_deltas() {
        let song = song();
        let bytes = write_segment_midi(&song, (0, 2)).unwrap();
        let parsed = parse_smf(&bytes, "rt", &ParseOptions::default()).unwrap();
        assert_eq!(parsed.events.len(), 3);
        let orig: Vec<(u8, u8, u8)> = song
            .events
            .iter()
            .map(|e| (e.channel, e.note, e.velocity))
            .collect();
        let got: Vec<(u8, u8, u8)> = parsed
            .events
            .iter()
            .map(|e| (e.channel, e.note, e.velocity))
            .collect();
        assert_eq!(orig, got);
        let orig_deltas: Vec<u64> = song
            .events
            .windows(2)
            .map(|w| w[1].tick - w[0].tick)
            .collect();
        let got_deltas: Vec<u64> = parsed
            .events
            .windows(2)
            .map(|w| w[1].tick - w[0].tick)
            .collect();
        assert_eq!(orig_deltas, got_deltas);
    }

    #[test]
    fn tempo_change_inside_range_is_kept() {
        let song = song();
        let bytes = write_segment_midi(&song, (1, 2)).unwrap();
        let parsed = parse_smf(&bytes, "tc", &ParseOptions::default()).unwrap();
        // Tempo in effect at tick 340 (500000) plus the change at tick 600.
        assert_eq!(
            parsed.tempo_map,
            vec![
                TempoChange {
                    tick: 0,
                    tempo: 500_000
                },
                TempoChange {
                    tick: 260,
                    tempo: 250_000
                },
            ]
        );
    }

    #[test]
    fn single_event_rebases_to_zero() {
        let song = song();
        let bytes = write_segment_midi(&song, (2, 2)).unwrap();
        let parsed = parse_smf(&bytes, "one", &ParseOptions::default()).unwrap();
        assert_eq!(
            parsed.events,
            vec![MidiEvent {
                tick: 0,
                channel: 0,
                note: 67,
                velocity: 70
            }]
        );
    }

    #[test]
    fn empty_and_out_of_range() {
        let song = song();
        assert!(matches!(
            write_segment_midi(&song, (2, 1)),
            Err(MidiError::EmptySegment)
        ));
        assert!(matches!(
            write_segment_midi(&song, (0, 3)),
            Err(MidiError::RangeOutOfBounds { .. })
        ));
    }
}
