//! CSV ingestion and emission.
//!
//! Cases: `id,x,y,t,status[,mark...]`. Persons: `id,entry,exit,x,y`, with an
//! optional relocations file `id,from_t,x,y`. Episodes: `person_id,onset,recovery`.
//! Row numbers in errors are file line numbers (the header is line 1).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{
    index_by_id, CaseDataset, Coord, CrsMode, DataError, DatasetFlags, Episode, EpisodePanel,
    Individual, PanelOptions, Person, Status, TrackPoint,
};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub crs: CrsMode,
    pub implicit_relatedness: bool,
    pub time_unit: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            crs: CrsMode::Planar,
            implicit_relatedness: false,
            time_unit: "days".into(),
        }
    }
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_case_data(path: impl AsRef<Path>, options: &LoadOptions) -> Result<CaseDataset, DataError> {
    read_case_data(open(path.as_ref())?, options)
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(reader: impl Read) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(1, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let row = e.position().map_or(0, |p| p.line() as usize);
                csv_error(row, e)
            })?;
            let line = rec.position().map_or(rows.len() + 2, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize, DataError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                row: 1,
                column: name.into(),
            })
    }
}

fn csv_error(row: usize, e: csv::Error) -> DataError {
    DataError::Csv {
        row,
        message: e.to_string(),
    }
}

fn parse_f64(row: usize, column: &str, raw: &str) -> Result<f64, DataError> {
    raw.parse::<f64>().map_err(|_| DataError::InvalidValue {
        row,
        column: column.into(),
        value: raw.into(),
    })
}

fn parse_coord(row: usize, column: &str, raw: &str) -> Result<f64, DataError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonFiniteCoordinate {
            row,
            column: column.into(),
        }),
    }
}

fn parse_status(row: usize, raw: &str) -> Result<Status, DataError> {
    match raw.to_ascii_lowercase().as_str() {
        "case" | "1" => Ok(Status::Case),
        "noncase" | "non-case" | "control" | "0" => Ok(Status::Noncase),
        _ => Err(DataError::InvalidValue {
            row,
            column: "status".into(),
            value: raw.into(),
        }),
    }
}

enum RawTime {
    Missing,
    Offset(f64),
    Date(NaiveDate),
}

fn parse_time(row: usize, raw: &str) -> Result<RawTime, DataError> {
    if raw.is_empty() {
        return Ok(RawTime::Missing);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return Ok(RawTime::Offset(v));
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map(RawTime::Date)
        .map_err(|_| DataError::InvalidValue {
            row,
            column: "t".into(),
            value: raw.into(),
        })
}

/// Reads a cases CSV. ISO-8601 dates in `t` become day offsets from the
/// earliest date in the file; a file may not mix dates and numbers.
pub fn read_case_data(reader: impl Read, options: &LoadOptions) -> Result<CaseDataset, DataError> {
    let table = Table::read(reader)?;
    let cols = ["id", "x", "y", "t", "status"].map(|c| table.column(c));
    let [id_c, x_c, y_c, t_c, s_c] = match cols {
        [Ok(a), Ok(b), Ok(c), Ok(d), Ok(e)] => [a, b, c, d, e],
        other => {
            return Err(other
                .into_iter()
                .find_map(Result::err)
                .expect("some column is missing"))
        }
    };
    let mark_cols: Vec<(usize, &str)> = table
        .headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![id_c, x_c, y_c, t_c, s_c].contains(i))
        .map(|(i, h)| (i, h.as_str()))
        .collect();

    let mut individuals = Vec::with_capacity(table.rows.len());
    let mut times = Vec::with_capacity(table.rows.len());
    let mut lines = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let field = |c: usize, name: &str| {
            rec.get(c).ok_or_else(|| DataError::MissingColumn {
                row: line,
                column: name.into(),
            })
        };
        let id = field(id_c, "id")?.to_owned();
        let x = parse_coord(line, "x", field(x_c, "x")?)?;
        let y = parse_coord(line, "y", field(y_c, "y")?)?;
        let time = parse_time(line, field(t_c, "t")?)?;
        let status = parse_status(line, field(s_c, "status")?)?;
        let marks = mark_cols
            .iter()
            .filter_map(|&(c, name)| {
                rec.get(c)
                    .filter(|v| !v.is_empty())
                    .map(|v| (name.to_owned(), v.to_owned()))
            })
            .collect();
        individuals.push(Individual {
            id,
            location: Coord::new(x, y),
            onset: None,
            status,
            marks,
        });
        times.push(time);
        lines.push(line);
    }

    let has_dates = times.iter().any(|t| matches!(t, RawTime::Date(_)));
    let origin = times
        .iter()
        .filter_map(|t| match t {
            RawTime::Date(d) => Some(*d),
            _ => None,
        })
        .min();
    for ((ind, time), &line) in individuals.iter_mut().zip(&times).zip(&lines) {
        ind.onset = match (time, origin) {
            (RawTime::Missing, _) => None,
            (RawTime::Offset(v), _) if !has_dates => Some(*v),
            (RawTime::Date(d), Some(o)) => Some((*d - o).num_days() as f64),
            _ => {
                return Err(DataError::InvalidValue {
                    row: line,
                    column: "t".into(),
                    value: "mixed dates and numeric offsets".into(),
                })
            }
        };
    }

    let flags = DatasetFlags {
        implicit_relatedness: options.implicit_relatedness,
    };
    let fallback = lines.last().copied().unwrap_or(1) + 1;
    CaseDataset::validated(
        individuals,
        options.crs,
        options.time_unit.clone(),
        flags,
        |i| lines.get(i).copied().unwrap_or(fallback),
    )
}

/// Writes the dataset in the same layout [`read_case_data`] accepts.
pub fn write_case_data(dataset: &CaseDataset, writer: impl Write) -> Result<(), csv::Error> {
    let marks: BTreeSet<&str> = dataset
        .individuals()
        .iter()
        .flat_map(|i| i.marks.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "x", "y", "t", "status"];
    header.extend(marks.iter().copied());
    w.write_record(&header)?;
    for ind in dataset.individuals() {
        let mut rec = vec![
            ind.id.clone(),
            ind.location.x.to_string(),
            ind.location.y.to_string(),
            ind.onset.map(|t| t.to_string()).unwrap_or_default(),
            match ind.status {
                Status::Case => "case".into(),
                Status::Noncase => "noncase".into(),
            },
        ];
        rec.extend(
            marks
                .iter()
                .map(|m| ind.marks.get(*m).cloned().unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_episode_panel(
    persons_path: impl AsRef<Path>,
    episodes_path: impl AsRef<Path>,
    relocations_path: Option<&Path>,
    options: PanelOptions,
) -> Result<EpisodePanel, DataError> {
    let relocations = relocations_path.map(open).transpose()?;
    read_episode_panel(
        open(persons_path.as_ref())?,
        open(episodes_path.as_ref())?,
        relocations,
        options,
    )
}

pub fn read_episode_panel(
    persons: impl Read,
    episodes: impl Read,
    relocations: Option<impl Read>,
    options: PanelOptions,
) -> Result<EpisodePanel, DataError> {
    let table = Table::read(persons)?;
    let [id_c, en_c, ex_c, x_c, y_c] = ["id", "entry", "exit", "x", "y"]
        .map(|c| table.column(c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .try_into()
        .expect("five columns");
    let mut people = Vec::with_capacity(table.rows.len());
    let mut person_lines = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let entry = parse_f64(line, "entry", get(en_c))?;
        let exit = parse_f64(line, "exit", get(ex_c))?;
        let at = Coord::new(
            parse_coord(line, "x", get(x_c))?,
            parse_coord(line, "y", get(y_c))?,
        );
        people.push(Person::resident(get(id_c), entry, exit, at));
        person_lines.push(line);
    }

    if let Some(reloc) = relocations {
        let table = Table::read(reloc)?;
        let [id_c, t_c, x_c, y_c] = ["id", "from_t", "x", "y"]
            .map(|c| table.column(c))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
            .try_into()
            .expect("four columns");
        let index = index_by_id(people.iter().map(|p| p.id.as_str()));
        let mut moves: BTreeMap<usize, Vec<(usize, TrackPoint)>> = BTreeMap::new();
        for (line, rec) in &table.rows {
            let line = *line;
            let get = |c: usize| rec.get(c).unwrap_or("");
            let Some(&p) = index.get(get(id_c)) else {
                return Err(DataError::UnknownPersonId {
                    row: line,
                    id: get(id_c).into(),
                });
            };
            let point = TrackPoint {
                from: parse_f64(line, "from_t", get(t_c))?,
                location: Coord::new(
                    parse_coord(line, "x", get(x_c))?,
                    parse_coord(line, "y", get(y_c))?,
                ),
            };
            moves.entry(p).or_default().push((line, point));
        }
        for (p, mut list) in moves {
            list.sort_by(|a, b| a.1.from.total_cmp(&b.1.from));
            for (line, point) in list {
                let person = &mut people[p];
                let last = person.track.last().expect("resident record").from;
                if point.from <= last {
                    return Err(DataError::InvalidTrack {
                        row: line,
                        id: person.id.clone(),
                    });
                }
                person.track.push(point);
            }
        }
    }

    let table = Table::read(episodes)?;
    let [p_c, on_c, rec_c] = ["person_id", "onset", "recovery"]
        .map(|c| table.column(c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .try_into()
        .expect("three columns");
    let index = index_by_id(people.iter().map(|p| p.id.as_str()));
    let mut eps = Vec::with_capacity(table.rows.len());
    let mut ep_lines = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let Some(&person) = index.get(get(p_c)) else {
            return Err(DataError::UnknownPersonId {
                row: line,
                id: get(p_c).into(),
            });
        };
        eps.push(Episode {
            person,
            onset: parse_f64(line, "onset", get(on_c))?,
            recovery: parse_f64(line, "recovery", get(rec_c))?,
        });
        ep_lines.push(line);
    }
    drop(index);
    EpisodePanel::validated(people, eps, &ep_lines, options, |i| person_lines[i])
}
