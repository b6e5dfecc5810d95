use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rasterized track map. Cell `(i, j)` covers
/// `[i*res, (i+1)*res) x [j*res, (j+1)*res)` in the grid frame, whose origin
/// and rotation relative to the world are given by `origin`. Row `j = 0` is
/// the bottom image row.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 3],
    occupied: Vec<bool>,
}

/// Map metadata record in the ROS map_server layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub image: String,
    pub resolution: f64,
    pub origin: [f64; 3],
    pub free_thresh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupied_thresh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negate: Option<i32>,
    /// Optional image size check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

impl MapMetadata {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let meta: MapMetadata =
            serde_yaml::from_str(text).map_err(|e| Error::Map(format!("metadata: {e}")))?;
        if !(meta.resolution > 0.0 && meta.resolution.is_finite()) {
            return Err(Error::Map(format!(
                "resolution must be positive, got {}",
                meta.resolution
            )));
        }
        if !(0.0..=1.0).contains(&meta.free_thresh) {
            return Err(Error::Map(format!(
                "free_thresh must lie in [0, 1], got {}",
                meta.free_thresh
            )));
        }
        Ok(meta)
    }
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: [f64; 3],
        occupied: Vec<bool>,
    ) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Map(format!("resolution must be positive, got {resolution}")));
        }
        if occupied.len() != width * height {
            return Err(Error::Map(format!(
                "cell count {} does not match {width}x{height}",
                occupied.len()
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            occupied,
        })
    }

    pub fn empty(width: usize, height: usize, resolution: f64, origin: [f64; 3]) -> Result<Self> {
        Self::new(width, height, resolution, origin, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// `None` outside the grid.
    pub fn is_occupied(&self, i: i64, j: i64) -> Option<bool> {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            None
        } else {
            Some(self.occupied[j as usize * self.width + i as usize])
        }
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, value: bool) {
        self.occupied[j * self.width + i] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&c| c).count()
    }

    /// World coordinates to metric grid-frame coordinates.
    pub fn world_to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        let [ox, oy, th] = self.origin;
        let (dx, dy) = (x - ox, y - oy);
        if th == 0.0 {
            return (dx, dy);
        }
        let (s, c) = th.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn grid_to_world(&self, gx: f64, gy: f64) -> (f64, f64) {
        let [ox, oy, th] = self.origin;
        if th == 0.0 {
            return (gx + ox, gy + oy);
        }
        let (s, c) = th.sin_cos();
        (c * gx - s * gy + ox, s * gx + c * gy + oy)
    }

    /// Heading in the grid frame.
    pub fn world_to_grid_angle(&self, yaw: f64) -> f64 {
        yaw - self.origin[2]
    }

    pub fn cell_of(&self, gx: f64, gy: f64) -> (i64, i64) {
        (
            (gx / self.resolution).floor() as i64,
            (gy / self.resolution).floor() as i64,
        )
    }

    /// Occupancy at a world point; outside the grid counts as occupied.
    pub fn occupied_at(&self, x: f64, y: f64) -> bool {
        let (gx, gy) = self.world_to_grid(x, y);
        let (i, j) = self.cell_of(gx, gy);
        self.is_occupied(i, j).unwrap_or(true)
    }

    /// World coordinates of the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let r = self.resolution;
        self.grid_to_world((i as f64 + 0.5) * r, (j as f64 + 0.5) * r)
    }

    /// Grayscale raster, top row first: white free, black occupied.
    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |c, r| {
            let j = self.height - 1 - r as usize;
            let occ = self.occupied[j * self.width + c as usize];
            image::Luma([if occ { 0 } else { 255 }])
        })
    }
}

/// Builds a grid from encoded image bytes (PNG or PGM) and a metadata record.
pub fn load_map(image_bytes: &[u8], meta: &MapMetadata) -> Result<OccupancyGrid> {
    let img = image::load_from_memory(image_bytes)
        .map_err(|e| Error::Map(format!("cannot decode image {}: {e}", meta.image)))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if meta.width.is_some_and(|mw| mw != w) || meta.height.is_some_and(|mh| mh != h) {
        return Err(Error::Map(format!(
            "image is {w}x{h} but metadata declares {}x{}",
            meta.width.unwrap_or(w),
            meta.height.unwrap_or(h)
        )));
    }
    let negate = meta.negate.unwrap_or(0) != 0;
    let mut occupied = vec![false; w * h];
    for (c, r, px) in img.enumerate_pixels() {
        let v = px.0[0] as f64;
        let p = if negate { v / 255.0 } else { (255.0 - v) / 255.0 };
        let j = h - 1 - r as usize;
        occupied[j * w + c as usize] = p >= meta.free_thresh;
    }
    OccupancyGrid::new(w, h, meta.resolution, meta.origin, occupied)
}

/// Reads a metadata YAML file and the image it names (relative to the YAML).
pub fn load_map_file(yaml_path: &Path) -> Result<OccupancyGrid> {
    let text = std::fs::read_to_string(yaml_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingAsset(yaml_path.to_path_buf()),
        _ => Error::io(yaml_path, e),
    })?;
    let meta = MapMetadata::from_yaml(&text)?;
    let img_path = yaml_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&meta.image);
    let bytes = std::fs::read(&img_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingAsset(img_path.clone()),
        _ => Error::io(&img_path, e),
    })?;
    load_map(&bytes, &meta)
}

/// Writes `<stem>.png` and `<stem>.yaml` into `dir`.
pub fn save_map(grid: &OccupancyGrid, dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    let png = dir.join(format!("{stem}.png"));
    grid.to_image()
        .save(&png)
        .map_err(|e| Error::Map(format!("cannot write {}: {e}", png.display())))?;
    let meta = MapMetadata {
        image: format!("{stem}.png"),
        resolution: grid.resolution,
        origin: grid.origin,
        free_thresh: 0.196,
        occupied_thresh: Some(0.65),
        negate: Some(0),
        width: None,
        height: None,
    };
    let yaml = dir.join(format!("{stem}.yaml"));
    let text = serde_yaml::to_string(&meta).map_err(|e| Error::Map(e.to_string()))?;
    std::fs::write(&yaml, text).map_err(|e| Error::io(&yaml, e))?;
    Ok(yaml)
}
