//! File formats and the output-directory committer.
//!
//! Every artifact of a run goes through [`Artifacts`], which hashes what it
//! writes and emits `manifest.json` last. Nothing in the manifest depends on
//! wall-clock time or thread scheduling, so identical runs produce identical
//! bytes.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::depth3d::{HeightMap, HeightMapMethod};
use crate::error::{McamError, Result};
use crate::raster::Image;
use crate::registration::{Composite, Pyramid, TileGrid};
use crate::scene_sim::{FrameSet, RasterTexture, Scene, SceneContent};
use crate::units::Length;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Quantize `[0, 1]` intensities to `levels − 1` full scale (clamped).
fn quantize(v: f32, max: f64) -> f64 {
    (v as f64 * max).round().clamp(0.0, max)
}

/// PNG bytes of an intensity image, 8-bit when `bit_depth ≤ 8` and 16-bit
/// otherwise, with `[0, 1]` mapped to the full code range of `bit_depth`.
pub fn encode_png(img: &Image, bit_depth: u32) -> Result<Vec<u8>> {
    let (h, w) = img.dim();
    let dynamic = if bit_depth <= 8 {
        let max = ((1u32 << bit_depth.max(1)) - 1) as f64;
        let data: Vec<u8> = img.iter().map(|&v| quantize(v, max) as u8).collect();
        DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w as u32, h as u32, data).expect("buffer size"))
    } else {
        let max = ((1u32 << bit_depth.min(16)) - 1) as f64;
        let data: Vec<u16> = img.iter().map(|&v| quantize(v, max) as u16).collect();
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, data).expect("buffer size"))
    };
    encode_dynamic(&dynamic)
}

fn encode_dynamic(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|e| McamError::Image {
        path: PathBuf::from("<memory>"),
        message: e.to_string(),
    })?;
    Ok(out.into_inner())
}

/// 16-bit PNG of raw codes.
pub fn encode_png_u16(codes: &Array2<u16>) -> Result<Vec<u8>> {
    let (h, w) = codes.dim();
    let data: Vec<u16> = codes.iter().copied().collect();
    encode_dynamic(&DynamicImage::ImageLuma16(
        ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, data).expect("buffer size"),
    ))
}

/// Read an 8- or 16-bit grayscale PNG into `[0, 1]` intensities.
pub fn read_png_gray(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| McamError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f32> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        other => {
            return Err(McamError::Image {
                path: path.to_path_buf(),
                message: format!("expected 8/16-bit grayscale, got {:?}", other.color()),
            })
        }
    };
    Ok(Array2::from_shape_vec((h, w), values).expect("image dimensions"))
}

/// Sidecar record of an imported scene PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSidecar {
    pub extent_mm: (f64, f64),
    pub sample_pitch_um: f64,
}

/// Scene from a grayscale PNG centred on the array axis. Texels must be
/// square: `extent_x / width = extent_y / height`.
pub fn import_scene_png(png: &Path, sidecar: &SceneSidecar) -> Result<Scene> {
    let data = read_png_gray(png)?;
    let (h, w) = data.dim();
    let (ex, ey) = (sidecar.extent_mm.0 * 1000.0, sidecar.extent_mm.1 * 1000.0);
    if !(ex > 0.0 && ey > 0.0) {
        return Err(McamError::Domain("scene extent must be positive".into()));
    }
    let pitch = ex / w as f64;
    if ((ey / h as f64) - pitch).abs() > 1e-9 * pitch.max(1.0) {
        return Err(McamError::Config(format!(
            "scene texels are not square: {pitch} µm by {} µm",
            ey / h as f64
        )));
    }
    Scene::new(
        SceneContent::Raster(RasterTexture {
            data,
            pitch,
            origin: (-ex / 2.0, -ey / 2.0),
        }),
        (Length::mm(sidecar.extent_mm.0), Length::mm(sidecar.extent_mm.1)),
        Length::um(sidecar.sample_pitch_um),
    )
}

/// `r{row}c{col}_z{µm}_t{exposure}.png`.
pub fn frame_file_name(row: usize, col: usize, z: Length, exposure: u64) -> String {
    format!("r{row}c{col}_z{}_t{exposure}.png", z.as_um())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub file: String,
    pub row: usize,
    pub col: usize,
    pub optical_axis_um: (f64, f64),
    pub z_um: f64,
    pub exposure_id: u64,
    pub roi: (usize, usize, usize, usize),
    pub binning: usize,
}

/// Object-plane placement of a pyramid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidManifest {
    pub origin_um: (f64, f64),
    pub pixel_size_um: f64,
    pub tile_px: usize,
    pub levels: Vec<PyramidLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidLevel {
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_size_um: f64,
    pub grid: TileGrid,
}

/// Scale and offset that map stored 16-bit codes back to heights. Code 0
/// marks invalid cells; `h = offset_um + scale_um · (code − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMapRecord {
    pub offset_um: f64,
    pub scale_um: f64,
    pub invalid_code: u16,
    pub origin_um: (f64, f64),
    pub pitch_um: f64,
    pub method: HeightMapMethod,
}

/// Height map as 16-bit codes plus its decoding record.
pub fn encode_height_map(map: &HeightMap) -> (Array2<u16>, HeightMapRecord) {
    let (lo, hi) = map.range().unwrap_or((0.0, 0.0));
    let span = hi - lo;
    let scale = if span > 0.0 { span / 65534.0 } else { 1.0 };
    let codes = Array2::from_shape_fn(map.grid.dim(), |i| {
        if map.mask[i] {
            1 + ((map.grid[i] - lo) / scale).round().clamp(0.0, 65534.0) as u16
        } else {
            0
        }
    });
    (
        codes,
        HeightMapRecord {
            offset_um: lo,
            scale_um: scale,
            invalid_code: 0,
            origin_um: map.origin_um,
            pitch_um: map.pitch_um,
            method: map.method,
        },
    )
}

pub fn decode_height_map(codes: &Array2<u16>, rec: &HeightMapRecord) -> HeightMap {
    let mask = codes.mapv(|c| c != rec.invalid_code);
    let grid = codes.mapv(|c| {
        if c == rec.invalid_code {
            f64::NAN
        } else {
            rec.offset_um + rec.scale_um * (c - 1) as f64
        }
    });
    HeightMap {
        grid,
        mask,
        origin_um: rec.origin_um,
        pitch_um: rec.pitch_um,
        method: rec.method,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
}

/// Single writer for one output directory.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
}

impl Artifacts {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| McamError::io(&root, e))?;
        Ok(Artifacts {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write `bytes` to `rel` (forward slashes) and record it.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        if rel == MANIFEST_NAME {
            return Err(McamError::Config("the manifest is written by finish()".into()));
        }
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| McamError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| McamError::io(&path, e))?;
        self.files.insert(
            rel.to_string(),
            FileEntry {
                path: rel.to_string(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write(rel, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_image(&mut self, rel: &str, img: &Image, bit_depth: u32) -> Result<()> {
        self.write(rel, &encode_png(img, bit_depth)?)
    }

    /// Record files written by a nested committer under `prefix/`.
    pub fn absorb(&mut self, prefix: &str, manifest: &Manifest) -> Result<()> {
        for f in &manifest.files {
            let path = format!("{prefix}/{}", f.path);
            self.files.insert(path.clone(), FileEntry { path, ..f.clone() });
        }
        let rel = format!("{prefix}/{MANIFEST_NAME}");
        let bytes = std::fs::read(self.root.join(&rel)).map_err(|e| McamError::io(self.root.join(&rel), e))?;
        self.files.insert(
            rel.clone(),
            FileEntry {
                path: rel,
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            },
        );
        Ok(())
    }

    /// Every frame as a PNG at the sensor bit depth plus `frames.json`.
    pub fn write_frame_set(&mut self, dir: &str, set: &FrameSet) -> Result<Vec<FrameRecord>> {
        let mut records = Vec::with_capacity(set.frames.len());
        for f in &set.frames {
            let file = frame_file_name(f.camera.row, f.camera.col, f.z_offset, f.exposure_id);
            self.write_image(&format!("{dir}/{file}"), &f.pixels, set.config.sensor.bit_depth)?;
            records.push(FrameRecord {
                file,
                row: f.camera.row,
                col: f.camera.col,
                optical_axis_um: (f.optical_axis.0.as_um(), f.optical_axis.1.as_um()),
                z_um: f.z_offset.as_um(),
                exposure_id: f.exposure_id,
                roi: (f.roi.x0, f.roi.y0, f.roi.width, f.roi.height),
                binning: f.binning,
            });
        }
        self.write_json(&format!("{dir}/frames.json"), &records)?;
        Ok(records)
    }

    /// 16-bit tiles `level{L}/x{i}_y{j}.png` and `pyramid.json` under `dir`.
    pub fn write_pyramid(&mut self, dir: &str, pyramid: &Pyramid, composite: &Composite) -> Result<PyramidManifest> {
        let mut levels = Vec::new();
        for (l, img) in pyramid.levels.iter().enumerate() {
            let grid = pyramid.grid(l);
            for j in 0..grid.rows {
                for i in 0..grid.columns {
                    self.write_image(&format!("{dir}/level{l}/x{i}_y{j}.png"), &pyramid.tile(l, i, j), 16)?;
                }
            }
            levels.push(PyramidLevel {
                level: l,
                width: img.ncols(),
                height: img.nrows(),
                pixel_size_um: composite.pixel_size.as_um() * (1u64 << l) as f64,
                grid,
            });
        }
        let manifest = PyramidManifest {
            origin_um: (composite.origin.0.as_um(), composite.origin.1.as_um()),
            pixel_size_um: composite.pixel_size.as_um(),
            tile_px: pyramid.tile_px,
            levels,
        };
        self.write_json(&format!("{dir}/pyramid.json"), &manifest)?;
        Ok(manifest)
    }

    /// `heightmap.png` (16-bit codes) and `heightmap.json` under `dir`.
    pub fn write_height_map(&mut self, dir: &str, map: &HeightMap) -> Result<HeightMapRecord> {
        let (codes, record) = encode_height_map(map);
        self.write(&format!("{dir}/heightmap.png"), &encode_png_u16(&codes)?)?;
        self.write_json(&format!("{dir}/heightmap.json"), &record)?;
        Ok(record)
    }

    /// Write `manifest.json` and close the directory.
    pub fn finish(self, mode: &str, config_sha256: &str) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "mcam".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            mode: mode.into(),
            config_sha256: config_sha256.into(),
            files: self.files.into_values().collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(|e| McamError::io(&path, e))?;
        Ok(manifest)
    }
}
