//! Run directories and the run log.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use log::{Level, LevelFilter, Log, Metadata, Record};

/// Output root when `ASGAN_RUN_DIR` is unset.
pub const DEFAULT_ROOT: &str = "runs";

/// A fresh directory named `<command>-<utc timestamp>-s<seed>` under the
/// output root.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, seed: u64) -> Result<Self> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{command}-{stamp}-s{seed}");
        for attempt in 0.. {
            let name = if attempt == 0 { base.clone() } else { format!("{base}-{attempt}") };
            let path = root.join(name);
            fs::create_dir_all(root).with_context(|| format!("creating output root {}", root.display()))?;
            match fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating run directory {}", path.display())),
            }
        }
        unreachable!("attempt counter is unbounded")
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn create_file(&self, name: &str) -> Result<std::io::BufWriter<File>> {
        let path = self.file(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(std::io::BufWriter::new(f))
    }
}

/// Logs to stderr and, once a run directory exists, to its `run.log`.
pub struct RunLogger {
    stderr_level: LevelFilter,
    start: Instant,
    file: Mutex<Option<File>>,
}

static LOGGER: std::sync::OnceLock<RunLogger> = std::sync::OnceLock::new();

impl RunLogger {
    pub fn install(verbose: bool) -> &'static RunLogger {
        let stderr_level = if verbose { LevelFilter::Debug } else { LevelFilter::Info };
        let logger = LOGGER.get_or_init(|| RunLogger {
            stderr_level,
            start: Instant::now(),
            file: Mutex::new(None),
        });
        if log::set_logger(logger).is_ok() {
            log::set_max_level(LevelFilter::Debug);
        }
        logger
    }

    pub fn attach(&self, path: &Path) -> Result<()> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening run log {}", path.display()))?;
        *self.file.lock().expect("log lock") = Some(f);
        Ok(())
    }
}

impl Log for RunLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Debug
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = format!(
            "[{:>9.3}s {:<5}] {}",
            self.start.elapsed().as_secs_f64(),
            record.level(),
            record.args()
        );
        if record.level() <= self.stderr_level {
            eprintln!("{line}");
        }
        if let Some(f) = self.file.lock().expect("log lock").as_mut() {
            // A failed log write must not abort the run.
            let _ = writeln!(f, "{line}");
        }
    }

    fn flush(&self) {
        if let Some(f) = self.file.lock().expect("log lock").as_mut() {
            let _ = f.flush();
        }
    }
}
