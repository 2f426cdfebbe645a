//! Standard MIDI File (format 0 and 1) reader.

use std::collections::{HashMap, VecDeque};

use super::MidiError;

pub const DRUM_CHANNEL: u8 = 9;

/// A sounding note in absolute ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MidiNote {
    pub start: u64,
    pub end: u64,
    pub pitch: u8,
    pub velocity: u8,
}

/// Notes of one channel within one track chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MidiInstrument {
    pub name: String,
    pub program: u8,
    pub channel: u8,
    pub is_drum: bool,
    pub notes: Vec<MidiNote>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TempoChange {
    pub tick: u64,
    pub micros_per_beat: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeSignature {
    pub tick: u64,
    pub numerator: u8,
    pub denominator: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MidiSong {
    pub format: u16,
    pub ticks_per_beat: u16,
    pub tempos: Vec<TempoChange>,
    pub time_signatures: Vec<TimeSignature>,
    pub instruments: Vec<MidiInstrument>,
    /// Largest end-of-track tick over all chunks.
    pub end_tick: u64,
}

impl MidiSong {
    pub fn note_count(&self) -> usize {
        self.instruments.iter().map(|i| i.notes.len()).sum()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> MidiError {
        MidiError::Parse {
            offset: self.pos,
            message: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("unexpected end of data, wanted {n} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn peek(&self) -> Result<u8, MidiError> {
        self.bytes.get(self.pos).copied().ok_or_else(|| self.err("unexpected end of data"))
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn varlen(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut v: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(MidiError::Parse {
            offset: start,
            message: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

#[derive(Default)]
struct ChannelState {
    program: Option<u8>,
    open: HashMap<u8, VecDeque<(u64, u8)>>,
    notes: Vec<MidiNote>,
    touched: bool,
}

/// Parses a Standard MIDI File. Every note is returned in absolute ticks;
/// a note-on with velocity 0 closes a note. Notes still sounding at the end
/// of their track are discarded.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiSong, MidiError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(MidiError::Parse {
            offset: 0,
            message: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err(format!("header length {header_len} < 6")));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let ntracks = r.u16()?;
    let division_at = r.pos;
    let division = r.u16()?;
    r.take(header_len - (r.pos - header_start))?;
    if format > 1 {
        return Err(MidiError::Parse {
            offset: header_start,
            message: format!("unsupported format {format}"),
        });
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(MidiError::Parse {
            offset: division_at,
            message: format!("unsupported time division 0x{division:04x}"),
        });
    }
    let mut song = MidiSong {
        format,
        ticks_per_beat: division,
        tempos: Vec::new(),
        time_signatures: Vec::new(),
        instruments: Vec::new(),
        end_tick: 0,
    };
    let mut track_index = 0;
    while track_index < ntracks {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if r.bytes.len() - r.pos < len {
            return Err(MidiError::Parse {
                offset: chunk_at,
                message: format!("chunk of {len} bytes runs past end of file"),
            });
        }
        if id != b"MTrk" {
            // Unknown chunks are skipped and do not count as tracks.
            r.pos += len;
            continue;
        }
        let body = &bytes[r.pos..r.pos + len];
        parse_track(body, r.pos, &mut song)?;
        r.pos += len;
        track_index += 1;
    }
    song.tempos.sort_by_key(|t| t.tick);
    song.time_signatures.sort_by_key(|t| t.tick);
    Ok(song)
}

fn parse_track(body: &[u8], base: usize, song: &mut MidiSong) -> Result<(), MidiError> {
    let mut r = Reader { bytes: body, pos: 0 };
    let offset_err = |e: MidiError| match e {
        MidiError::Parse { offset, message } => MidiError::Parse {
            offset: offset + base,
            message,
        },
        other => other,
    };
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut name = String::new();
    let mut channels: HashMap<u8, ChannelState> = HashMap::new();
    let mut ended = false;
    while r.pos < body.len() {
        tick += r.varlen().map_err(offset_err)? as u64;
        let first = r.peek().map_err(offset_err)?;
        let status = if first & 0x80 != 0 {
            r.pos += 1;
            first
        } else {
            running.ok_or_else(|| offset_err(r.err("data byte without running status")))?
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8().map_err(offset_err)?;
                let len = r.varlen().map_err(offset_err)? as usize;
                let data = r.take(len).map_err(offset_err)?;
                match kind {
                    0x03 if name.is_empty() => name = String::from_utf8_lossy(data).into_owned(),
                    0x2f => {
                        ended = true;
                        break;
                    }
                    0x51 if len == 3 => song.tempos.push(TempoChange {
                        tick,
                        micros_per_beat: u32::from_be_bytes([0, data[0], data[1], data[2]]),
                    }),
                    0x58 if len >= 2 => {
                        if data[1] > 7 {
                            return Err(offset_err(r.err(format!("time signature exponent {}", data[1]))));
                        }
                        song.time_signatures.push(TimeSignature {
                            tick,
                            numerator: data[0],
                            denominator: 1 << data[1],
                        })
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.varlen().map_err(offset_err)? as usize;
                r.take(len).map_err(offset_err)?;
            }
            0xf1..=0xfe => {
                return Err(offset_err(r.err(format!("system message 0x{status:02x} inside a track"))));
            }
            _ => {
                running = Some(status);
                let kind = status & 0xf0;
                let channel = status & 0x0f;
                let a = data_byte(&mut r).map_err(offset_err)?;
                let b = if matches!(kind, 0xc0 | 0xd0) {
                    0
                } else {
                    data_byte(&mut r).map_err(offset_err)?
                };
                let state = channels.entry(channel).or_default();
                match kind {
                    0x90 if b > 0 => {
                        state.touched = true;
                        state.open.entry(a).or_default().push_back((tick, b));
                    }
                    0x80 | 0x90 => {
                        if let Some((start, velocity)) = state.open.get_mut(&a).and_then(VecDeque::pop_front) {
                            if tick > start {
                                state.notes.push(MidiNote {
                                    start,
                                    end: tick,
                                    pitch: a,
                                    velocity,
                                });
                            }
                        }
                    }
                    0xc0
                        if (!state.touched || state.program.is_none()) => {
                            state.program = Some(a);
                        }
                    _ => {}
                }
            }
        }
    }
    if !ended {
        return Err(MidiError::Parse {
            offset: base + body.len(),
            message: "track chunk without end-of-track event".into(),
        });
    }
    song.end_tick = song.end_tick.max(tick);
    let mut keys: Vec<u8> = channels.keys().copied().collect();
    keys.sort_unstable();
    for ch in keys {
        let mut state = channels.remove(&ch).expect("key from map");
        if state.notes.is_empty() {
            continue;
        }
        state.notes.sort_by_key(|n| (n.start, n.pitch, n.end));
        song.instruments.push(MidiInstrument {
            name: name.clone(),
            program: state.program.unwrap_or(0),
            channel: ch,
            is_drum: ch == DRUM_CHANNEL,
            notes: state.notes,
        });
    }
    Ok(())
}

fn data_byte(r: &mut Reader) -> Result<u8, MidiError> {
    let b = r.u8()?;
    if b & 0x80 != 0 {
        r.pos -= 1;
        return Err(r.err(format!("status byte 0x{b:02x} where a data byte was expected")));
    }
    Ok(b)
}
