//! Append-only JSONL journal plus periodic snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shelfwatch_core::codec;

use super::ledger::{CloudLedger, JournalEntry};
use super::CloudError;

const JOURNAL_FILE: &str = "journal.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Serialize, Deserialize)]
struct Envelope {
    seq: u64,
    #[serde(flatten)]
    entry: JournalEntry,
}

pub(crate) struct Journal {
    dir: PathBuf,
    log: BufWriter<File>,
    next_seq: u64,
}

impl Journal {
    /// Loads the snapshot, replays the journal on top of it and leaves the
    /// journal open for appends. A torn final line, as left by a crash
    /// mid-write, is dropped.
    pub(crate) fn open(dir: &Path) -> Result<(Self, CloudLedger), CloudError> {
        fs::create_dir_all(dir)?;
        let mut ledger = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => codec::decode::<CloudLedger>(&bytes).map_err(|e| CloudError::Corrupt {
                file: SNAPSHOT_FILE.into(),
                line: 0,
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => CloudLedger::default(),
            Err(e) => return Err(e.into()),
        };
        ledger.reindex();

        let path = dir.join(JOURNAL_FILE);
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut lines = reader.split(b'\n').enumerate().peekable();
            while let Some((i, line)) = lines.next() {
                let line = line?;
                let is_last = lines.peek().is_none();
                if line.iter().all(u8::is_ascii_whitespace) {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match codec::decode::<Envelope>(&line) {
                    Ok(env) => {
                        ledger.apply(env.seq, &env.entry);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(e) if is_last => {
                        tracing::warn!(line = i + 1, error = %e, "dropping torn journal tail");
                    }
                    Err(e) => {
                        return Err(CloudError::Corrupt {
                            file: JOURNAL_FILE.into(),
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)?;
        file.set_len(valid_len)?;
        let mut log = BufWriter::new(file);
        std::io::Seek::seek(&mut log, std::io::SeekFrom::End(0))?;
        let next_seq = ledger.last_seq + 1;
        Ok((
            Self {
                dir: dir.to_owned(),
                log,
                next_seq,
            },
            ledger,
        ))
    }

    /// Writes entries and returns their sequence numbers.
    pub(crate) fn append(&mut self, entries: &[JournalEntry]) -> Result<Vec<u64>, CloudError> {
        let mut seqs = Vec::with_capacity(entries.len());
        for entry in entries {
            let env = Envelope {
                seq: self.next_seq,
                entry: entry.clone(),
            };
            let mut line = codec::encode(&env);
            line.push(b'\n');
            self.log.write_all(&line)?;
            seqs.push(self.next_seq);
            self.next_seq += 1;
        }
        self.log.flush()?;
        Ok(seqs)
    }

    /// Writes a snapshot of `ledger` and truncates the journal.
    pub(crate) fn compact(&mut self, ledger: &CloudLedger) -> Result<(), CloudError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, codec::encode(ledger))?;
        File::open(&tmp)?.sync_all()?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        let file = OpenOptions::new()
            .write(true)
            .truncate(true)
            .open(self.dir.join(JOURNAL_FILE))?;
        self.log = BufWriter::new(file);
        Ok(())
    }
}
