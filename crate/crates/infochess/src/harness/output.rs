//! Experiment output files: CSV tables for aggregates and JSONL game records.

use std::io::{BufRead, Write};

use infochess_core::{GameRecord, Team};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CurveRow, MatchupMatrix, MatchupResult, MovementAllocation};

#[derive(Debug, thiserror::Error)]
pub enum RecordsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("records line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("records file has no header line")]
    MissingHeader,
}

/// First line of a records file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub engine_version: String,
    /// SHA-256 of the experiment configuration's JSON.
    pub config_hash: String,
}

impl RecordHeader {
    pub fn for_config<C: Serialize>(config: &C) -> RecordHeader {
        let json = serde_json::to_vec(config).expect("configurations serialize to JSON");
        RecordHeader { engine_version: infochess_core::ENGINE_VERSION.into(), config_hash: hex::encode(Sha256::digest(&json)) }
    }
}

/// Header line, then one game record per line.
pub fn write_records<'a, W: Write>(
    mut w: W,
    header: &RecordHeader,
    records: impl IntoIterator<Item = &'a GameRecord>,
) -> Result<(), RecordsError> {
    let line = |e| RecordsError::Parse { line: 0, source: e };
    serde_json::to_writer(&mut w, header).map_err(line)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<(RecordHeader, Vec<GameRecord>), RecordsError> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |e| RecordsError::Parse { line: i + 1, source: e };
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(parse)?);
        } else {
            records.push(serde_json::from_str(&line).map_err(parse)?);
        }
    }
    Ok((header.ok_or(RecordsError::MissingHeader)?, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchupRow {
    pub agent_a: String,
    pub agent_b: String,
    pub game_id: u64,
    pub color_a: Team,
    pub score_a: f64,
    pub score_b: f64,
    /// `a`, `b` or `draw`.
    pub winner: String,
}

pub fn matchup_rows(result: &MatchupResult) -> Vec<MatchupRow> {
    result
        .games
        .iter()
        .map(|g| MatchupRow {
            agent_a: result.agent_a.clone(),
            agent_b: result.agent_b.clone(),
            game_id: g.result.game_id,
            color_a: g.result.color_a,
            score_a: g.result.score_a,
            score_b: g.result.score_b,
            winner: match g.result.a_won() {
                Some(true) => "a",
                Some(false) => "b",
                None => "draw",
            }
            .into(),
        })
        .collect()
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<(), RecordsError> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read, T: serde::de::DeserializeOwned>(r: R) -> Result<Vec<T>, RecordsError> {
    csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>().map_err(Into::into)
}

/// Raw score pairs of every cell.
pub fn write_matrix_scores<W: Write>(w: W, matrix: &MatchupMatrix) -> Result<(), RecordsError> {
    write_csv(w, matrix.cells.iter().flat_map(|(_, r)| matchup_rows(r)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRow {
    pub row_agent: String,
    pub column_agent: String,
    pub games: usize,
    pub win_percent: f64,
    pub draw_percent: f64,
}

/// Win percentage of the row agent against the column agent.
pub fn win_rows(matrix: &MatchupMatrix) -> Vec<WinRow> {
    let pct = matrix.win_percentages();
    let mut rows = Vec::new();
    for (i, a) in matrix.agents.iter().enumerate() {
        for (j, b) in matrix.agents.iter().enumerate() {
            let cell = matrix.cell(i, j).expect("every pair has a cell");
            rows.push(WinRow {
                row_agent: a.clone(),
                column_agent: b.clone(),
                games: cell.games.len(),
                win_percent: pct[i][j],
                draw_percent: 100.0 * cell.draw_fraction(),
            });
        }
    }
    rows
}

pub fn write_curves<W: Write>(w: W, rows: &[CurveRow]) -> Result<(), RecordsError> {
    write_csv(w, rows)
}

pub fn write_movement<W: Write>(w: W, alloc: &MovementAllocation) -> Result<(), RecordsError> {
    write_csv(w, alloc.rows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentFactory;
    use crate::harness::{run_matchup, ColorPolicy, MatchupSpec};
    use infochess_core::{replay, GameConfig};

    fn small_matchup() -> MatchupResult {
        let spec = MatchupSpec {
            agent_a: "random".parse().unwrap(),
            agent_b: "vismax".parse().unwrap(),
            n_games: 4,
            seed: 5,
            color: ColorPolicy::RandomSplit,
        };
        run_matchup(&spec, &mut AgentFactory::new(None), &GameConfig::default()).unwrap()
    }

    #[test]
    fn records_round_trip_and_replay() {
        let result = small_matchup();
        let header = RecordHeader::for_config(&"cfg");
        let mut buf = Vec::new();
        write_records(&mut buf, &header, result.records()).unwrap();
        let (back_header, back) = read_records(buf.as_slice()).unwrap();
        assert_eq!(back_header, header);
        assert_eq!(back.len(), 4);
        for (a, b) in back.iter().zip(result.records()) {
            assert_eq!(a, b);
            let state = replay(a).unwrap();
            for team in Team::BOTH {
                assert_eq!(state.score(team), a.final_scores.get(team));
            }
        }
    }

    #[test]
    fn matchup_csv_round_trips_and_recounts() {
        let result = small_matchup();
        let mut buf = Vec::new();
        write_csv(&mut buf, matchup_rows(&result)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("agent_a,agent_b,game_id,color_a,score_a,score_b,winner\n"));
        let rows: Vec<MatchupRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, matchup_rows(&result));
        let wins = rows.iter().filter(|r| r.score_a > r.score_b).count();
        assert_eq!(wins, result.wins_a());
    }

    #[test]
    fn config_hash_is_stable() {
        let a = RecordHeader::for_config(&serde_json::json!({"seed": 1}));
        let b = RecordHeader::for_config(&serde_json::json!({"seed": 1}));
        let c = RecordHeader::for_config(&serde_json::json!({"seed": 2}));
        assert_eq!(a, b);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
    }
}
