use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use brush_core::masks::{load_mask_png, save_mask_png};
use brush_core::MaskRaster;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::runs::RunRecord;
use crate::session::Session;

/// On-disk layout:
///
/// ```text
/// <root>/sessions/<sid>/session.json
///                      /masks/<mask_id>.png
///                      /runs/<rid>/run.json, job.json, final.lat, final.png, frames/<index>.png
/// ```
#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, &bytes)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, sid: &str) -> PathBuf {
        self.root.join("sessions").join(sid)
    }

    pub fn run_dir(&self, sid: &str, rid: &str) -> PathBuf {
        self.session_dir(sid).join("runs").join(rid)
    }

    pub fn frame_path(&self, sid: &str, rid: &str, index: usize) -> PathBuf {
        self.run_dir(sid, rid)
            .join("frames")
            .join(format!("{index}.png"))
    }

    fn mask_path(&self, sid: &str, mask_id: &str) -> PathBuf {
        self.session_dir(sid)
            .join("masks")
            .join(format!("{mask_id}.png"))
    }

    pub fn save_session(&self, session: &Session) -> io::Result<()> {
        let dir = self.session_dir(&session.id);
        fs::create_dir_all(dir.join("masks"))?;
        fs::create_dir_all(dir.join("runs"))?;
        write_json(&dir.join("session.json"), session)
    }

    pub fn delete_session(&self, sid: &str) -> io::Result<()> {
        match fs::remove_dir_all(self.session_dir(sid)) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            other => other,
        }
    }

    /// Every readable session on disk. Unreadable directories are skipped
    /// with a warning.
    pub fn load_sessions(&self) -> io::Result<Vec<Session>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("sessions"))? {
            let path = entry?.path().join("session.json");
            match read_json::<Session>(&path) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping session"),
            }
        }
        out.sort_by_key(|s| s.created_ms);
        Ok(out)
    }

    pub fn save_mask(&self, sid: &str, mask_id: &str, raster: &MaskRaster) -> io::Result<()> {
        let path = self.mask_path(sid, mask_id);
        fs::create_dir_all(path.parent().expect("mask path has a parent"))?;
        let bytes = save_mask_png(raster).map_err(io::Error::other)?;
        write_atomic(&path, &bytes)
    }

    pub fn load_mask(&self, sid: &str, mask_id: &str) -> io::Result<MaskRaster> {
        let bytes = fs::read(self.mask_path(sid, mask_id))?;
        load_mask_png(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn mask_png(&self, sid: &str, mask_id: &str) -> io::Result<Vec<u8>> {
        fs::read(self.mask_path(sid, mask_id))
    }

    pub fn delete_mask(&self, sid: &str, mask_id: &str) -> io::Result<()> {
        fs::remove_file(self.mask_path(sid, mask_id))
    }

    pub fn create_run_dir(&self, sid: &str, rid: &str) -> io::Result<()> {
        fs::create_dir_all(self.run_dir(sid, rid).join("frames"))
    }

    pub fn save_run(&self, record: &RunRecord) -> io::Result<()> {
        write_json(
            &self
                .run_dir(&record.session_id, &record.run_id)
                .join("run.json"),
            record,
        )
    }

    pub fn load_run(&self, sid: &str, rid: &str) -> io::Result<RunRecord> {
        read_json(&self.run_dir(sid, rid).join("run.json"))
    }

    pub fn write_run_file(&self, sid: &str, rid: &str, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.run_dir(sid, rid).join(name), bytes)
    }

    pub fn read_run_file(&self, sid: &str, rid: &str, name: &str) -> io::Result<Vec<u8>> {
        fs::read(self.run_dir(sid, rid).join(name))
    }
}
