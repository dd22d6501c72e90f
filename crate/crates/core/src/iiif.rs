//! IIIF Image API URLs and Presentation manifest ingestion.
//!
//! URLs follow the Image API 3.0 template
//! `{base}/{region}/{size}/{rotation}/{quality}.{format}` with rotation 0,
//! quality `default` and format `jpg`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{require, Action};
use crate::elements::{bounding_box, insert_elements, ElementRecord, ImageInput, ImageRef, NewElement};
use crate::error::Result;
use crate::ids::{ProjectId, UserId};
use crate::platform::Platform;
use crate::store::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IiifRegion {
    Full,
    Rect { x: u32, y: u32, w: u32, h: u32 },
}

impl IiifRegion {
    pub fn rect(x: u32, y: u32, w: u32, h: u32) -> Self {
        IiifRegion::Rect { x, y, w, h }
    }

    /// Checks the region against the image frame.
    pub fn validate_for(&self, image: &ImageRef) -> Result<(), RegionError> {
        let IiifRegion::Rect { x, y, w, h } = *self else { return Ok(()) };
        if w == 0 || h == 0 {
            return Err(RegionError::Empty);
        }
        let fits = u64::from(x) + u64::from(w) <= u64::from(image.width)
            && u64::from(y) + u64::from(h) <= u64::from(image.height);
        if !fits {
            return Err(RegionError::OutOfBounds { region: *self, width: image.width, height: image.height });
        }
        Ok(())
    }

    /// `Full` is read as the whole image.
    pub fn contains(&self, other: &IiifRegion, image: &ImageRef) -> bool {
        let (ax, ay, aw, ah) = self.as_rect(image);
        let (bx, by, bw, bh) = other.as_rect(image);
        ax <= bx && ay <= by && ax + aw >= bx + bw && ay + ah >= by + bh
    }

    fn as_rect(&self, image: &ImageRef) -> (u64, u64, u64, u64) {
        match *self {
            IiifRegion::Full => (0, 0, u64::from(image.width), u64::from(image.height)),
            IiifRegion::Rect { x, y, w, h } => (x.into(), y.into(), w.into(), h.into()),
        }
    }
}

impl fmt::Display for IiifRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IiifRegion::Full => f.write_str("full"),
            IiifRegion::Rect { x, y, w, h } => write!(f, "{x},{y},{w},{h}"),
        }
    }
}

impl FromStr for IiifRegion {
    type Err = RegionError;

    /// Strict inverse of `Display`: `full` or four unsigned decimal integers.
    fn from_str(s: &str) -> Result<Self, RegionError> {
        if s == "full" {
            return Ok(IiifRegion::Full);
        }
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(RegionError::Malformed(s.to_string()));
        }
        let mut n = [0u32; 4];
        for (slot, part) in n.iter_mut().zip(&parts) {
            if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(RegionError::Malformed(s.to_string()));
            }
            *slot = part.parse().map_err(|_| RegionError::Malformed(s.to_string()))?;
        }
        let region = IiifRegion::rect(n[0], n[1], n[2], n[3]);
        if n[2] == 0 || n[3] == 0 {
            return Err(RegionError::Empty);
        }
        Ok(region)
    }
}

impl TryFrom<String> for IiifRegion {
    type Error = RegionError;
    fn try_from(s: String) -> Result<Self, RegionError> {
        s.parse()
    }
}

impl From<IiifRegion> for String {
    fn from(r: IiifRegion) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegionError {
    #[error("region has zero width or height")]
    Empty,
    #[error("region {region} exceeds the {width}x{height} image")]
    OutOfBounds { region: IiifRegion, width: u32, height: u32 },
    #[error("malformed region {0:?}")]
    Malformed(String),
    #[error("max_width must be positive")]
    ZeroWidth,
    #[error("not a IIIF image URL: {0:?}")]
    NotAnImageUrl(String),
}

/// `{base}/{region}/{size}/0/default.jpg`, size being `max` or `{max_width},`.
pub fn image_url(image: &ImageRef, region: IiifRegion, max_width: Option<u32>) -> Result<String, RegionError> {
    region.validate_for(image)?;
    let size = match max_width {
        None => "max".to_string(),
        Some(0) => return Err(RegionError::ZeroWidth),
        Some(w) => format!("{w},"),
    };
    Ok(format!("{}/{region}/{size}/0/default.jpg", image.iiif_base_uri))
}

/// Extracts the region segment of a URL produced by [`image_url`].
pub fn parse_region(url: &str) -> Result<IiifRegion, RegionError> {
    let segments: Vec<&str> = url.rsplitn(5, '/').collect();
    match segments.as_slice() {
        ["default.jpg", "0", _size, region, _base] => region.parse(),
        _ => Err(RegionError::NotAnImageUrl(url.to_string())),
    }
}

fn clamp_rect(x0: i64, y0: i64, x1: i64, y1: i64, image: &ImageRef) -> IiifRegion {
    let (iw, ih) = (i64::from(image.width), i64::from(image.height));
    let x0 = x0.clamp(0, iw);
    let y0 = y0.clamp(0, ih);
    let x1 = x1.clamp(0, iw).max(x0 + 1).min(iw);
    let y1 = y1.clamp(0, ih).max(y0 + 1).min(ih);
    let x0 = x0.min(x1 - 1);
    let y0 = y0.min(y1 - 1);
    IiifRegion::rect(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
}

/// Bounding box of the element polygon as a region.
pub fn element_crop(element: &ElementRecord) -> IiifRegion {
    let bb = bounding_box(&element.polygon);
    clamp_rect(bb.x, bb.y, bb.x + bb.w, bb.y + bb.h, &element.image)
}

/// Tolerance so that products like 0.1 × 50 do not round outward by a pixel.
const CROP_EPS: f64 = 1e-9;

/// Bounding box grown by `margin·w` left and right and `margin·h` above and
/// below, rounded outward and clamped to the image. Negative or non-finite
/// margins count as zero.
pub fn context_crop(element: &ElementRecord, margin: f64) -> IiifRegion {
    let margin = if margin.is_finite() && margin > 0.0 { margin } else { 0.0 };
    let bb = bounding_box(&element.polygon);
    let (mx, my) = (margin * bb.w as f64, margin * bb.h as f64);
    let x0 = (bb.x as f64 - mx + CROP_EPS).floor() as i64;
    let y0 = (bb.y as f64 - my + CROP_EPS).floor() as i64;
    let x1 = ((bb.x + bb.w) as f64 + mx - CROP_EPS).ceil() as i64;
    let y1 = ((bb.y + bb.h) as f64 + my - CROP_EPS).ceil() as i64;
    clamp_rect(x0, y0, x1, y1, &element.image)
}

/// Image URLs served with a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementImages {
    pub full: String,
    pub crop: String,
    pub crop_region: IiifRegion,
    pub context: String,
    pub context_region: IiifRegion,
}

pub fn element_images(element: &ElementRecord, margin: f64) -> ElementImages {
    let crop_region = element_crop(element);
    let context_region = context_crop(element, margin);
    let url = |r| image_url(&element.image, r, None).expect("crop regions are clamped to the image");
    ElementImages {
        full: url(IiifRegion::Full),
        crop: url(crop_region),
        crop_region,
        context: url(context_region),
        context_region,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPage {
    pub image_uri: String,
    pub width: u32,
    pub height: u32,
    pub label: String,
    pub sequence_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Unparseable(String),
    #[error("document has neither `sequences` nor `items`")]
    NotAManifest,
    #[error("manifest has no canvases")]
    NoCanvases,
    #[error("canvas {canvas} has no valid `{field}`")]
    MissingDimension { canvas: usize, field: &'static str },
    #[error("canvas {canvas} has no image service")]
    NoImageService { canvas: usize },
    #[error("manifest fetch failed: {0}")]
    Fetch(String),
}

/// Reads the canvases of a Presentation 2 (`sequences[0].canvases`) or
/// Presentation 3 (`items`) manifest, in document order.
pub fn parse_manifest(document: &str) -> Result<Vec<ManifestPage>, ManifestError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ManifestError::Unparseable(e.to_string()))?;
    parse_manifest_value(&value)
}

pub fn parse_manifest_value(doc: &Value) -> Result<Vec<ManifestPage>, ManifestError> {
    let (canvases, v2) = if let Some(seqs) = doc.get("sequences") {
        let canvases = seqs
            .as_array()
            .and_then(|s| s.first())
            .and_then(|s| s.get("canvases"))
            .and_then(Value::as_array)
            .ok_or(ManifestError::NoCanvases)?;
        (canvases, true)
    } else if let Some(items) = doc.get("items").and_then(Value::as_array) {
        (items, false)
    } else {
        return Err(ManifestError::NotAManifest);
    };
    if canvases.is_empty() {
        return Err(ManifestError::NoCanvases);
    }
    canvases
        .iter()
        .enumerate()
        .map(|(i, canvas)| {
            let width = dimension(canvas, "width").ok_or(ManifestError::MissingDimension { canvas: i, field: "width" })?;
            let height =
                dimension(canvas, "height").ok_or(ManifestError::MissingDimension { canvas: i, field: "height" })?;
            let service = if v2 { v2_service(canvas) } else { v3_service(canvas) };
            let image_uri = service.ok_or(ManifestError::NoImageService { canvas: i })?;
            Ok(ManifestPage {
                image_uri,
                width,
                height,
                label: canvas.get("label").map(label_text).unwrap_or_default(),
                sequence_index: i as u32,
            })
        })
        .collect()
}

fn dimension(canvas: &Value, field: &str) -> Option<u32> {
    let v = canvas.get(field)?;
    let n = match v.as_u64() {
        Some(n) => n,
        None => {
            let f = v.as_f64()?;
            if f.fract() != 0.0 || f < 0.0 {
                return None;
            }
            f as u64
        }
    };
    u32::try_from(n).ok().filter(|n| *n > 0)
}

fn id_of(v: &Value) -> Option<&str> {
    v.get("@id").or_else(|| v.get("id")).and_then(Value::as_str)
}

fn one_or_many(v: &Value) -> Vec<&Value> {
    match v {
        Value::Array(items) => items.iter().collect(),
        Value::Null => Vec::new(),
        other => vec![other],
    }
}

fn service_base(resource: &Value) -> Option<String> {
    let service = resource.get("service")?;
    one_or_many(service).into_iter().find_map(id_of).map(|id| {
        id.trim_end_matches("/info.json").trim_end_matches('/').to_string()
    })
}

fn v2_service(canvas: &Value) -> Option<String> {
    let images = canvas.get("images")?;
    one_or_many(images)
        .into_iter()
        .filter_map(|img| img.get("resource"))
        .flat_map(one_or_many)
        .find_map(service_base)
}

fn v3_service(canvas: &Value) -> Option<String> {
    let pages = canvas.get("items")?;
    one_or_many(pages)
        .into_iter()
        .filter_map(|page| page.get("items"))
        .flat_map(one_or_many)
        .filter_map(|anno| anno.get("body"))
        .flat_map(one_or_many)
        .find_map(service_base)
}

/// Plain string, v2 `@value` objects or v3 language maps.
fn label_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.first().map(label_text).unwrap_or_default(),
        Value::Object(map) => {
            if let Some(value) = map.get("@value") {
                return label_text(value);
            }
            map.get("none")
                .or_else(|| map.get("en"))
                .or_else(|| map.values().next())
                .map(label_text)
                .unwrap_or_default()
        }
        Value::Number(n) => n.to_string(),
        _ => String::new(),
    }
}

/// One full-frame page element per canvas, ordered by sequence position.
pub fn pages_to_elements(pages: &[ManifestPage], page_type: &str) -> Vec<NewElement> {
    pages
        .iter()
        .map(|page| {
            let image = ImageInput { uri: page.image_uri.clone(), width: page.width, height: page.height };
            let frame = ImageRef {
                iiif_base_uri: page.image_uri.clone(),
                width: page.width,
                height: page.height,
            }
            .full_frame();
            NewElement {
                id: None,
                element_type: page_type.to_string(),
                image,
                polygon: frame,
                parent: None,
                order_index: page.sequence_index,
                name: page.label.clone(),
            }
        })
        .collect()
}

pub(crate) fn ingest_in(st: &mut State, project: ProjectId, document: &str, page_type: &str) -> Result<Vec<ElementRecord>> {
    let pages = parse_manifest(document)?;
    insert_elements(st, project, pages_to_elements(&pages, page_type))
}

impl Platform {
    /// Creates one page element per canvas of the manifest. All-or-nothing.
    pub fn ingest_manifest(&self, actor: UserId, project: ProjectId, document: &str, page_type: &str) -> Result<Vec<ElementRecord>> {
        let pages = parse_manifest(document)?;
        self.write(|st| {
            require(st, project, actor, Action::ImportElements)?;
            insert_elements(st, project, pages_to_elements(&pages, page_type))
        })
    }
}
