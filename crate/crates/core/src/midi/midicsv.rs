//! MIDICSV text format: one event message per comma-separated row.

use super::{sort_and_filter, MidiError, MidiEvent, MidiSong, ParseOptions, TempoChange};

fn csv_err(row: usize, what: impl Into<String>) -> MidiError {
    MidiError::CsvRow {
        row,
        what: what.into(),
    }
}

fn field<'a>(fields: &[&'a str], idx: usize, row: usize, what: &str) -> Result<&'a str, MidiError> {
    fields
        .get(idx)
        .copied()
        .ok_or_else(|| csv_err(row, format!("missing {what} field")))
}

fn numeric<T: std::str::FromStr>(s: &str, row: usize, what: &str) -> Result<T, MidiError> {
    s.trim()
        .parse::<T>()
        .map_err(|_| csv_err(row, format!("non-numeric {what} field {s:?}")))
}

fn bounded(value: u32, max: u32, row: usize, what: &str) -> Result<u8, MidiError> {
    if value > max {
        return Err(csv_err(
            row,
            format!("{what} {value} out of range 0..={max}"),
        ));
    }
    Ok(value as u8)
}

/// Parse MIDICSV text. Only `Note_on_c` rows become events; `Tempo` rows feed
/// the tempo map; the `Header` row carries the division. Unknown row types
/// are ignored.
pub fn parse_midicsv(
    text: &str,
    source_id: &str,
    opts: &ParseOptions,
) -> Result<MidiSong, MidiError> {
    let mut division: Option<u16> = None;
    let mut song = MidiSong {
        division: 1,
        events: Vec::new(),
        tempo_map: Vec::new(),
        source_id: source_id.to_string(),
    };

    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let kind = field(&fields, 2, row, "type")?.trim().to_ascii_lowercase();
        match kind.as_str() {
            "header" => {
                let div: i64 = numeric(field(&fields, 5, row, "division")?, row, "division")?;
                if !(1..=0x7fff).contains(&div) {
                    return Err(csv_err(row, format!("division {div} must be in 1..=32767")));
                }
                division = Some(div as u16);
            }
            "tempo" => {
                let tick: u64 = numeric(field(&fields, 1, row, "time")?, row, "time")?;
                let tempo: u32 = numeric(field(&fields, 3, row, "tempo")?, row, "tempo")?;
                if tempo == 0 {
                    return Err(csv_err(row, "tempo must be positive"));
                }
                song.tempo_map.push(TempoChange { tick, tempo });
            }
            "note_on_c" => {
                let tick: u64 = numeric(field(&fields, 1, row, "time")?, row, "time")?;
                let channel: u32 = numeric(field(&fields, 3, row, "channel")?, row, "channel")?;
                let note: u32 = numeric(field(&fields, 4, row, "note")?, row, "note")?;
                let velocity: u32 = numeric(field(&fields, 5, row, "velocity")?, row, "velocity")?;
                song.events.push(MidiEvent {
                    tick,
                    channel: bounded(channel, 15, row, "channel")?,
                    note: bounded(note, 127, row, "note")?,
                    velocity: bounded(velocity, 127, row, "velocity")?,
                });
            }
            _ => {}
        }
    }

    match division {
        Some(d) => song.division = d,
        None => return Err(csv_err(0, "missing Header row with division")),
    }
    sort_and_filter(&mut song, opts);
    Ok(song)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ParseOptions {
        ParseOptions::default()
    }

    #[test]
    fn single_note_on_row() {
        let text = "0, 0, Header, 1, 1, 480\n1, 0, Start_track\n1, 0, Note_on_c, 3, 60, 100\n1, 10, End_track\n";
        let song = parse_midicsv(text, "one", &opts()).unwrap();
        assert_eq!(song.division, 480);
        assert_eq!(
            song.events,
            vec![MidiEvent {
                tick: 0,
                channel: 3,
                note: 60,
                velocity: 100
            }]
        );
    }

    #[test]
    fn note_off_rows_are_ignored() {
        let text =
            "0, 0, Header, 1, 1, 96\n1, 0, Note_on_c, 0, 60, 90\n1, 5, Note_off_c, 0, 60, 0\n";
        let song = parse_midicsv(text, "off", &opts()).unwrap();
        assert_eq!(song.events.len(), 1);
    }

    #[test]
    fn rows_sort_by_tick() {
        let text = "\
0, 0, Header, 1, 2, 480
1, 40, Note_on_c, 0, 62, 80
1, 10, Note_on_c, 0, 60, 80
2, 25, Note_on_c, 5, 70, 90
2, 10, Note_on_c, 5, 71, 90
2, 0, Note_on_c, 5, 72, 90
";
        let song = parse_midicsv(text, "sorted", &opts()).unwrap();
        // Hand-sorted: 0, 10 (track 1 before track 2 at equal tick), 10, 25, 40.
        let got: Vec<(u64, u8)> = song.events.iter().map(|e| (e.tick, e.note)).collect();
        assert_eq!(got, vec![(0, 72), (10, 60), (10, 71), (25, 70), (40, 62)]);
    }

    #[test]
    fn tempo_rows_collected() {
        let text = "0, 0, Header, 1, 1, 480\n1, 0, Tempo, 500000\n1, 960, Tempo, 250000\n1, 0, Note_on_c, 0, 60, 1\n";
        let song = parse_midicsv(text, "tempo", &opts()).unwrap();
        assert_eq!(
            song.tempo_map,
            vec![
                TempoChange {
                    tick: 0,
                    tempo: 500_000
                },
                TempoChange {
                    tick: 960,
                    tempo: 250_000
                }
            ]
        );
    }

    #[test]
    fn errors_name_the_row() {
        let missing = parse_midicsv("1, 0, Note_on_c, 0, 60, 100\n", "x", &opts()).unwrap_err();
        assert!(missing.to_string().contains("Header"), "{missing}");

        let bad = parse_midicsv(
            "0, 0, Header, 1, 1, 480\n1, zz, Note_on_c, 0, 60, 100\n",
            "x",
            &opts(),
        );
        let err = bad.unwrap_err();
        assert!(err.to_string().starts_with("row 2"), "{err}");

        let range = parse_midicsv(
            "0, 0, Header, 1, 1, 480\n1, 0, Note_on_c, 19, 60, 100\n",
            "x",
            &opts(),
        );
        assert!(range.is_err());
    }
}
