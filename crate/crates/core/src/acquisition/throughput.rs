//! Data-path arithmetic: bytes per snapshot, frame rate and recording time.

use serde::{Deserialize, Serialize};

use crate::array_model::SensorSpec;
use crate::error::{McamError, Result};

/// Bytes per array snapshot: every camera transmits its (cropped, binned)
/// frame at the sensor bit depth, rounded up to whole bytes per snapshot.
pub fn frame_bytes(sensor: &SensorSpec, n_cameras: usize, binning: usize, crop: Option<(usize, usize)>) -> Result<u64> {
    let (w, h) = crop.unwrap_or((sensor.pixels_x, sensor.pixels_y));
    if w == 0 || h == 0 || w > sensor.pixels_x || h > sensor.pixels_y {
        return Err(McamError::Domain(format!(
            "crop {w}×{h} must be non-empty and within the {}×{} sensor",
            sensor.pixels_x, sensor.pixels_y
        )));
    }
    if binning == 0 || w % binning != 0 || h % binning != 0 {
        return Err(McamError::Domain(format!("binning {binning} does not divide {w}×{h}")));
    }
    if n_cameras == 0 {
        return Err(McamError::Domain("camera count must be positive".into()));
    }
    let pixels = n_cameras as u64 * (w / binning) as u64 * (h / binning) as u64;
    Ok((pixels * sensor.bit_depth as u64).div_ceil(8))
}

/// Snapshots per second the link sustains.
pub fn max_frame_rate(frame_bytes: u64, bandwidth: f64) -> Result<f64> {
    if frame_bytes == 0 || !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(McamError::Domain("frame size and bandwidth must be positive".into()));
    }
    Ok(bandwidth / frame_bytes as f64)
}

/// Frames that fit in the buffer and the seconds they last at `fps`.
pub fn recording_capacity(frame_bytes: u64, fps: f64, buffer_bytes: f64) -> Result<(u64, f64)> {
    if frame_bytes == 0 || !(fps > 0.0) || !(buffer_bytes > 0.0) || !buffer_bytes.is_finite() {
        return Err(McamError::Domain("frame size, rate and buffer must be positive".into()));
    }
    let frames = (buffer_bytes / frame_bytes as f64).floor() as u64;
    Ok((frames, frames as f64 / fps))
}

/// Link and buffer figures; the efficiency factor scales both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPath {
    pub bandwidth_bytes_per_s: f64,
    pub buffer_bytes: f64,
    pub efficiency: f64,
}

impl Default for DataPath {
    /// 5 GB/s link and 128 GB of RAM, ideal.
    fn default() -> Self {
        DataPath {
            bandwidth_bytes_per_s: 5e9,
            buffer_bytes: 128e9,
            efficiency: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub n_cameras: usize,
    pub binning: usize,
    pub crop: Option<(usize, usize)>,
    pub frame_bytes: u64,
    pub max_fps: f64,
    pub buffer_frames: u64,
    pub max_duration_s: f64,
    pub path: DataPath,
}

impl ThroughputReport {
    /// Two-column `quantity,value` table.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| McamError::Parse(format!("csv: {e}"));
        let crop = self.crop.map(|(x, y)| format!("{x}x{y}")).unwrap_or_else(|| "full".into());
        let rows = [
            ("n_cameras", self.n_cameras.to_string()),
            ("binning", self.binning.to_string()),
            ("crop", crop),
            ("bandwidth_bytes_per_s", format!("{}", self.path.bandwidth_bytes_per_s)),
            ("buffer_bytes", format!("{}", self.path.buffer_bytes)),
            ("efficiency", format!("{}", self.path.efficiency)),
            ("frame_bytes", self.frame_bytes.to_string()),
            ("max_fps", format!("{:.6}", self.max_fps)),
            ("buffer_frames", self.buffer_frames.to_string()),
            ("max_duration_s", format!("{:.6}", self.max_duration_s)),
        ];
        w.write_record(["quantity", "value"]).map_err(csv_err)?;
        for (k, v) in rows {
            w.write_record([k, v.as_str()]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| McamError::Parse(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| McamError::Parse(e.to_string()))
    }
}

pub fn throughput_report(
    sensor: &SensorSpec,
    n_cameras: usize,
    binning: usize,
    crop: Option<(usize, usize)>,
    path: DataPath,
) -> Result<ThroughputReport> {
    if !(path.efficiency > 0.0 && path.efficiency <= 1.0) {
        return Err(McamError::Domain(format!("efficiency {} must be in (0, 1]", path.efficiency)));
    }
    let bytes = frame_bytes(sensor, n_cameras, binning, crop)?;
    let max_fps = max_frame_rate(bytes, path.bandwidth_bytes_per_s * path.efficiency)?;
    let (buffer_frames, max_duration_s) = recording_capacity(bytes, max_fps, path.buffer_bytes * path.efficiency)?;
    Ok(ThroughputReport {
        n_cameras,
        binning,
        crop,
        frame_bytes: bytes,
        max_fps,
        buffer_frames,
        max_duration_s,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::prototype_sensor;

    #[test]
    fn snapshot_sizes() {
        let s = prototype_sensor();
        assert_eq!(frame_bytes(&s, 54, 1, None).unwrap(), 708_963_840);
        assert_eq!(frame_bytes(&s, 54, 2, None).unwrap(), 177_240_960);
        assert_eq!(frame_bytes(&s, 54, 1, Some((3072, 3072))).unwrap(), 509_607_936);
        assert!(frame_bytes(&s, 54, 1, Some((5000, 10))).is_err());
        assert!(frame_bytes(&s, 54, 7, None).is_err());
        let ten_bit = SensorSpec { bit_depth: 10, ..s };
        assert_eq!(frame_bytes(&ten_bit, 1, 1, Some((4, 1))).unwrap(), 5);
    }

    #[test]
    fn frame_rates() {
        let s = prototype_sensor();
        let fps = |b, crop| max_frame_rate(frame_bytes(&s, 54, b, crop).unwrap(), 5e9).unwrap();
        assert!((fps(1, None) - 7.05).abs() < 0.005);
        assert!((fps(2, None) - 28.2).abs() < 0.05);
        assert!((fps(1, Some((3072, 3072))) - 9.8).abs() < 0.05);
        assert_eq!(fps(2, None), 4.0 * fps(1, None));
    }

    #[test]
    fn capacity_and_efficiency() {
        let (frames, secs) = recording_capacity(1000, 4.0, 10_500.0).unwrap();
        assert_eq!(frames, 10);
        assert_eq!(secs, 2.5);
        let s = prototype_sensor();
        let ideal = throughput_report(&s, 54, 1, None, DataPath::default()).unwrap();
        assert_eq!(ideal.buffer_frames, 180);
        let half = throughput_report(&s, 54, 1, None, DataPath { efficiency: 0.5, ..Default::default() }).unwrap();
        assert!((half.max_fps * 2.0 - ideal.max_fps).abs() < 1e-12);
        assert_eq!(half.buffer_frames, 90);
        assert!(throughput_report(&s, 54, 1, None, DataPath { efficiency: 0.0, ..Default::default() }).is_err());
        assert!(recording_capacity(0, 1.0, 1.0).is_err());
        let csv = ideal.to_csv().unwrap();
        assert!(csv.starts_with("quantity,value\n") && csv.contains("frame_bytes,708963840"));
    }
}
