//! JSON-lines training log: one `{member, epoch, train_loss, val_loss, w,
//! wallclock}` object per epoch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use peds_core::training::{EpochRecord, TrainMonitor};
use serde::Serialize;

use crate::{Error, Result};

#[derive(Serialize)]
struct Entry<'a> {
    #[serde(flatten)]
    record: &'a EpochRecord,
    stage: &'a str,
    wallclock: f64,
}

pub struct JsonlLog {
    out: Mutex<Box<dyn Write + Send>>,
    stage: Mutex<String>,
    start: Instant,
}

impl JsonlLog {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::to_writer(BufWriter::new(f)))
    }

    pub fn to_writer(w: impl Write + Send + 'static) -> Self {
        JsonlLog {
            out: Mutex::new(Box::new(w)),
            stage: Mutex::new(String::new()),
            start: Instant::now(),
        }
    }

    pub fn flush(&self) {
        let _ = self.out.lock().unwrap().flush();
    }
}

impl TrainMonitor for JsonlLog {
    fn on_epoch(&self, record: &EpochRecord) -> bool {
        let stage = self.stage.lock().unwrap().clone();
        let entry = Entry {
            record,
            stage: &stage,
            wallclock: self.start.elapsed().as_secs_f64(),
        };
        let line = serde_json::to_string(&entry).expect("log entry serializes");
        let _ = writeln!(self.out.lock().unwrap(), "{line}");
        true
    }

    fn on_stage(&self, stage: &str) {
        *self.stage.lock().unwrap() = stage.to_string();
    }
}

impl Drop for JsonlLog {
    fn drop(&mut self) {
        self.flush();
    }
}
