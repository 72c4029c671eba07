//! Standard MIDI File (format 0 and 1) parser.

use super::vlq::{self, VlqError};
use super::{
    malformed, sort_and_filter, MidiError, MidiEvent, MidiSong, ParseOptions, TempoChange,
};

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    limit: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor {
            data,
            pos: 0,
            limit: data.len(),
        }
    }

    fn remaining(&self) -> usize {
        self.limit - self.pos
    }

    fn u8(&mut self, what: &str) -> Result<u8, MidiError> {
        if self.pos >= self.limit {
            return Err(malformed(
                self.pos,
                format!("unexpected end while reading {what}"),
            ));
        }
        let b = self.data[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        if self.pos < self.limit {
            Some(self.data[self.pos])
        } else {
            None
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return Err(malformed(
                self.pos,
                format!(
                    "unexpected end while reading {what} ({n} bytes needed, {} left)",
                    self.remaining()
                ),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16be(&mut self, what: &str) -> Result<u16, MidiError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32be(&mut self, what: &str) -> Result<u32, MidiError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self, what: &str) -> Result<u32, MidiError> {
        let start = self.pos;
        match vlq::decode(&self.data[self.pos..self.limit]) {
            Ok((v, used)) => {
                self.pos += used;
                Ok(v)
            }
            Err(VlqError::TooLong) => Err(malformed(
                start,
                format!("variable-length quantity in {what} exceeds 4 bytes"),
            )),
            Err(VlqError::Truncated) => Err(malformed(
                start,
                format!("unexpected end inside variable-length quantity in {what}"),
            )),
        }
    }

    /// A data byte must have the high bit clear.
    fn data_byte(&mut self, what: &str) -> Result<u8, MidiError> {
        let at = self.pos;
        let b = self.u8(what)?;
        if b & 0x80 != 0 {
            return Err(malformed(
                at,
                format!("expected data byte in {what}, got status {b:#04x}"),
            ));
        }
        Ok(b)
    }
}

/// Parse an SMF byte stream into a [`MidiSong`].
///
/// All note-on events across all tracks are merged into one tick-sorted
/// stream (stable within equal ticks); tempo meta events feed the tempo map.
/// Running status and variable-length delta times are honored. SMPTE
/// divisions are rejected.
pub fn parse_smf(
    bytes: &[u8],
    source_id: &str,
    opts: &ParseOptions,
) -> Result<MidiSong, MidiError> {
    let mut cur = Cursor::new(bytes);

    let tag = cur.take(4, "header chunk tag")?;
    if tag != b"MThd" {
        return Err(malformed(
            0,
            format!("expected MThd header, got {tag:02x?}"),
        ));
    }
    let hlen = cur.u32be("header length")?;
    if hlen != 6 {
        return Err(malformed(
            cur.pos - 4,
            format!("header chunk length must be 6, got {hlen}"),
        ));
    }
    let format = cur.u16be("format")?;
    if format > 1 {
        return Err(malformed(
            cur.pos - 2,
            format!("unsupported SMF format {format}"),
        ));
    }
    let ntrks = cur.u16be("track count")?;
    let division_raw = cur.u16be("division")?;
    if division_raw & 0x8000 != 0 {
        return Err(malformed(
            cur.pos - 2,
            "SMPTE division is not supported".to_string(),
        ));
    }
    if division_raw == 0 {
        return Err(malformed(
            cur.pos - 2,
            "division must be positive".to_string(),
        ));
    }

    let mut song = MidiSong {
        division: division_raw,
        events: Vec::new(),
        tempo_map: Vec::new(),
        source_id: source_id.to_string(),
    };

    let mut tracks_done = 0u16;
    while tracks_done < ntrks {
        let chunk_at = cur.pos;
        let tag = cur.take(4, "chunk tag")?;
        let len = cur.u32be("chunk length")? as usize;
        if len > cur.remaining() {
            return Err(malformed(
                chunk_at,
                format!(
                    "truncated chunk: declares {len} bytes, {} left",
                    cur.remaining()
                ),
            ));
        }
        if tag != b"MTrk" {
            // Alien chunks are skipped per the SMF spec.
            cur.pos += len;
            continue;
        }
        let end = cur.pos + len;
        parse_track(&mut cur, end, &mut song)?;
        cur.pos = end;
        cur.limit = bytes.len();
        tracks_done += 1;
    }

    sort_and_filter(&mut song, opts);
    Ok(song)
}

fn parse_track(cur: &mut Cursor<'_>, end: usize, song: &mut MidiSong) -> Result<(), MidiError> {
    cur.limit = end;
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;

    while cur.pos < end {
        tick += cur.vlq("delta time")? as u64;
        let status = match cur.peek() {
            Some(b) if b & 0x80 != 0 => {
                cur.pos += 1;
                b
            }
            Some(_) => running.ok_or_else(|| {
                malformed(cur.pos, "data byte with no running status".to_string())
            })?,
            None => {
                return Err(malformed(
                    cur.pos,
                    "unexpected end of track chunk".to_string(),
                ))
            }
        };

        match status {
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x90 => {
                        let note = cur.data_byte("note-on")?;
                        let velocity = cur.data_byte("note-on")?;
                        song.events.push(MidiEvent {
                            tick,
                            channel,
                            note,
                            velocity,
                        });
                    }
                    0xc0 | 0xd0 => {
                        cur.data_byte("channel message")?;
                    }
                    _ => {
                        cur.data_byte("channel message")?;
                        cur.data_byte("channel message")?;
                    }
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = cur.vlq("sysex length")? as usize;
                cur.take(len, "sysex payload")?;
            }
            0xff => {
                // Meta events do not cancel running status in SMF.
                let meta_at = cur.pos;
                let kind = cur.u8("meta type")?;
                let len = cur.vlq("meta length")? as usize;
                let payload = cur.take(len, "meta payload")?;
                match kind {
                    0x51 => {
                        if len != 3 {
                            return Err(malformed(
                                meta_at,
                                format!("tempo meta must carry 3 bytes, got {len}"),
                            ));
                        }
                        let tempo = u32::from_be_bytes([0, payload[0], payload[1], payload[2]]);
                        if tempo == 0 {
                            return Err(malformed(meta_at, "tempo must be positive".to_string()));
                        }
                        song.tempo_map.push(TempoChange { tick, tempo });
                    }
                    0x2f => {
                        // End of track: ignore anything after it.
                        return Ok(());
                    }
                    _ => {}
                }
            }
            _ => {
                return Err(malformed(
                    cur.pos - 1,
                    format!("unexpected status byte {status:#04x}"),
                ));
            }
        }
    }
    Ok(())
}
