//! Typed document elements: pages, lines, rows and zones, each located by a
//! polygon over an image served by a IIIF Image API server.
//!
//! Coordinates are integer pixels in the full-resolution frame of the image.
//! No pixel data is stored, only the image reference.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{require, Action};
use crate::error::{EntityKind, Error, Result};
use crate::ids::{ElementId, ProjectId, UserId};
use crate::platform::Platform;
use crate::store::State;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds { x: i64, y: i64, width: u32, height: u32 },
    #[error("invalid image reference: {0}")]
    InvalidImage(String),
}

/// One image on a IIIF Image API server.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub iiif_base_uri: String,
    pub width: u32,
    pub height: u32,
}

impl ImageRef {
    pub fn new(iiif_base_uri: impl Into<String>, width: u32, height: u32) -> Result<Self, GeometryError> {
        let image = Self {
            iiif_base_uri: iiif_base_uri.into().trim_end_matches('/').to_string(),
            width,
            height,
        };
        image.validate()?;
        Ok(image)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidImage("width and height must be positive".into()));
        }
        let parsed = url::Url::parse(&self.iiif_base_uri)
            .map_err(|e| GeometryError::InvalidImage(format!("{}: {e}", self.iiif_base_uri)))?;
        if parsed.cannot_be_a_base() {
            return Err(GeometryError::InvalidImage(format!("{} is not a base URI", self.iiif_base_uri)));
        }
        Ok(())
    }

    /// Polygon covering the whole image.
    pub fn full_frame(&self) -> Polygon {
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        Polygon(vec![Point::new(0, 0), Point::new(w, 0), Point::new(w, h), Point::new(0, h)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

impl From<[i64; 2]> for Point {
    fn from([x, y]: [i64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [i64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A closed ring of points. Self-intersection is not checked; zero area is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    pub fn from_pairs(points: &[(i64, i64)]) -> Self {
        Self(points.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    /// Twice the signed shoelace area.
    pub fn doubled_area(&self) -> i128 {
        let pts = &self.0;
        (0..pts.len())
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                i128::from(a.x) * i128::from(b.y) - i128::from(b.x) * i128::from(a.y)
            })
            .sum()
    }

    /// Shape checks that do not depend on an image.
    pub fn validate_shape(&self) -> Result<(), GeometryError> {
        if self.0.len() < 3 {
            return Err(GeometryError::TooFewPoints(self.0.len()));
        }
        if self.doubled_area() == 0 {
            return Err(GeometryError::ZeroArea);
        }
        Ok(())
    }

    pub fn validate_for(&self, image: &ImageRef) -> Result<(), GeometryError> {
        self.validate_shape()?;
        let (w, h) = (i64::from(image.width), i64::from(image.height));
        match self.0.iter().find(|p| p.x < 0 || p.y < 0 || p.x > w || p.y > h) {
            Some(p) => Err(GeometryError::OutOfBounds {
                x: p.x,
                y: p.y,
                width: image.width,
                height: image.height,
            }),
            None => Ok(()),
        }
    }

    /// `x1,y1;x2,y2;…`, the single-cell form used in tabular exports.
    pub fn to_cell(&self) -> String {
        self.0
            .iter()
            .map(|p| format!("{},{}", p.x, p.y))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BoundingBox {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }
}

/// Smallest axis-aligned integer rectangle containing every point, with
/// width and height of at least one pixel.
pub fn bounding_box(polygon: &Polygon) -> BoundingBox {
    let pts = polygon.points();
    let min_x = pts.iter().map(|p| p.x).min().unwrap_or(0);
    let max_x = pts.iter().map(|p| p.x).max().unwrap_or(0);
    let min_y = pts.iter().map(|p| p.y).min().unwrap_or(0);
    let max_y = pts.iter().map(|p| p.y).max().unwrap_or(0);
    BoundingBox {
        x: min_x,
        y: min_y,
        w: (max_x - min_x).max(1),
        h: (max_y - min_y).max(1),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub element_id: ElementId,
    pub project_id: ProjectId,
    pub element_type: String,
    pub image: ImageRef,
    pub polygon: Polygon,
    pub parent: Option<ElementId>,
    pub order_index: u32,
    pub name: String,
}

/// Input for [`Platform::create_element`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewElement {
    /// Caller-assigned id; allocated when absent.
    #[serde(default)]
    pub id: Option<ElementId>,
    #[serde(rename = "type")]
    pub element_type: String,
    pub image: ImageInput,
    pub polygon: Polygon,
    #[serde(default)]
    pub parent: Option<ElementId>,
    #[serde(rename = "order")]
    pub order_index: u32,
    #[serde(default)]
    pub name: String,
}

/// `image` object of the line-delimited import format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInput {
    pub uri: String,
    pub width: u32,
    pub height: u32,
}

impl From<&ImageRef> for ImageInput {
    fn from(image: &ImageRef) -> Self {
        Self {
            uri: image.iiif_base_uri.clone(),
            width: image.width,
            height: image.height,
        }
    }
}

/// Validates a batch of new elements against the store and each other, then
/// inserts them all. Nothing is inserted if any element is rejected.
pub(crate) fn insert_elements(st: &mut State, project: ProjectId, batch: Vec<NewElement>) -> Result<Vec<ElementRecord>> {
    let mut accepted: BTreeMap<ElementId, ElementRecord> = BTreeMap::new();
    let mut order = Vec::with_capacity(batch.len());
    let mut sibling_slots: BTreeSet<(ElementId, u32)> = BTreeSet::new();
    let mut next_auto = st.ids.clone();

    for (line, new) in batch.into_iter().enumerate() {
        let wrap = |e: Error| Error::Import { line: line + 1, source: Box::new(e) };
        let image = ImageRef::new(&new.image.uri, new.image.width, new.image.height)
            .map_err(|e| wrap(e.into()))?;
        new.polygon.validate_for(&image).map_err(|e| wrap(e.into()))?;
        if new.element_type.trim().is_empty() {
            return Err(wrap(Error::Validation("element type must not be empty".into())));
        }
        let id = match new.id {
            Some(id) => {
                if st.elements.contains_key(&id) || accepted.contains_key(&id) {
                    return Err(wrap(Error::DuplicateElement(id)));
                }
                next_auto.observe_element(id);
                id
            }
            None => loop {
                let candidate = next_auto.next_element();
                if !st.elements.contains_key(&candidate) && !accepted.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        if let Some(parent_id) = new.parent {
            if parent_id == id {
                return Err(wrap(Error::Cycle(id)));
            }
            let parent = st
                .elements
                .get(&parent_id)
                .or_else(|| accepted.get(&parent_id))
                .ok_or_else(|| wrap(Error::UnknownParent(parent_id)))?;
            if parent.project_id != project {
                return Err(wrap(Error::UnknownParent(parent_id)));
            }
            if parent.image.iiif_base_uri != image.iiif_base_uri {
                return Err(wrap(Error::Validation(format!(
                    "element image {} differs from parent image {}",
                    image.iiif_base_uri, parent.image.iiif_base_uri
                ))));
            }
            let taken = st
                .children_ids(parent_id)
                .any(|c| st.elements[&c].order_index == new.order_index)
                || sibling_slots.contains(&(parent_id, new.order_index));
            if taken {
                return Err(wrap(Error::DuplicateOrder { parent: parent_id, order_index: new.order_index }));
            }
            sibling_slots.insert((parent_id, new.order_index));
        }
        order.push(id);
        accepted.insert(
            id,
            ElementRecord {
                element_id: id,
                project_id: project,
                element_type: new.element_type.trim().to_string(),
                image,
                polygon: new.polygon,
                parent: new.parent,
                order_index: new.order_index,
                name: new.name,
            },
        );
    }

    st.ids = next_auto;
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let record = accepted.remove(&id).expect("accepted above");
        st.ids.observe_element(id);
        if let Some(parent) = record.parent {
            st.index.children.entry(parent).or_default().insert(id);
        }
        st.elements.insert(id, record.clone());
        out.push(record);
    }
    Ok(out)
}

fn sorted_children(st: &State, element: ElementId, type_filter: Option<&str>) -> Vec<ElementRecord> {
    let mut children: Vec<ElementRecord> = st
        .children_ids(element)
        .map(|id| &st.elements[&id])
        .filter(|e| type_filter.is_none_or(|t| e.element_type == t))
        .cloned()
        .collect();
    children.sort_by_key(|e| (e.order_index, e.element_id));
    children
}

pub(crate) fn children_of_in(st: &State, element: ElementId, type_filter: Option<&str>) -> Result<Vec<ElementRecord>> {
    if !st.elements.contains_key(&element) {
        return Err(Error::not_found(EntityKind::Element, element));
    }
    Ok(sorted_children(st, element, type_filter))
}

pub(crate) fn element_in(st: &State, element: ElementId) -> Result<&ElementRecord> {
    st.elements
        .get(&element)
        .ok_or_else(|| Error::not_found(EntityKind::Element, element))
}

impl Platform {
    pub fn create_element(&self, actor: UserId, project: ProjectId, new: NewElement) -> Result<ElementRecord> {
        self.import_element_batch(actor, project, vec![new])
            .map(|mut v| v.pop().expect("one element in, one out"))
            .map_err(|e| match e {
                Error::Import { source, .. } => *source,
                other => other,
            })
    }

    pub fn import_element_batch(&self, actor: UserId, project: ProjectId, batch: Vec<NewElement>) -> Result<Vec<ElementRecord>> {
        self.write(|st| {
            require(st, project, actor, Action::ImportElements)?;
            insert_elements(st, project, batch)
        })
    }

    /// Imports the line-delimited JSON element format, one element per
    /// non-blank line. The import is all-or-nothing.
    pub fn import_elements_jsonl(&self, actor: UserId, project: ProjectId, body: &str) -> Result<Vec<ElementRecord>> {
        let mut batch = Vec::new();
        let mut source_lines = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let new: NewElement = serde_json::from_str(line).map_err(|e| Error::Import {
                line: i + 1,
                source: Box::new(Error::Validation(e.to_string())),
            })?;
            batch.push(new);
            source_lines.push(i + 1);
        }
        self.import_element_batch(actor, project, batch).map_err(|e| match e {
            Error::Import { line, source } => Error::Import { line: source_lines[line - 1], source },
            other => other,
        })
    }

    pub fn element(&self, actor: UserId, element: ElementId) -> Result<ElementRecord> {
        self.read(|st| {
            let el = element_in(st, element)?;
            require(st, el.project_id, actor, Action::ViewElements)?;
            Ok(el.clone())
        })
    }

    /// Children ordered by `order_index`, optionally restricted to one type.
    pub fn children_of(&self, actor: UserId, element: ElementId, type_filter: Option<&str>) -> Result<Vec<ElementRecord>> {
        self.read(|st| {
            let el = element_in(st, element)?;
            require(st, el.project_id, actor, Action::ViewElements)?;
            children_of_in(st, element, type_filter)
        })
    }

    /// Elements of a project ordered by id, optionally restricted to one type.
    pub fn elements_of(&self, actor: UserId, project: ProjectId, type_filter: Option<&str>) -> Result<Vec<ElementRecord>> {
        self.read(|st| {
            require(st, project, actor, Action::ViewElements)?;
            Ok(st
                .elements
                .values()
                .filter(|e| e.project_id == project && type_filter.is_none_or(|t| e.element_type == t))
                .cloned()
                .collect())
        })
    }
}
