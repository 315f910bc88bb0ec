//! Region annotations and their XML form.
//!
//! Schema:
//!
//! ```xml
//! <annotation image="foot_001" width="640" height="480">
//!   <region class="roi"><point x="10" y="12.5"/>...</region>
//!   <region class="ulcer"><point .../>...</region>
//!   <region class="surrounding_skin"><point .../>...</region>
//! </annotation>
//! ```
//!
//! Exactly one `roi` region is required; `ulcer` and `surrounding_skin` may repeat.
//! Coordinates are pixel units with the origin at the top-left image corner.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub points: Vec<Point>,
}

impl Polygon {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        Polygon {
            points: points.into_iter().map(|(x, y)| Point { x, y }).collect(),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Shoelace area (absolute).
    pub fn area(&self) -> f64 {
        self.edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
            .abs()
            / 2.0
    }

    /// Even-odd containment test; points on an edge count as inside.
    pub fn contains(&self, p: Point) -> bool {
        if self.edges().any(|(a, b)| on_segment(a, b, p)) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True if no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    cross(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

/// True if two segments cross at a point interior to both.
fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAnnotation {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub roi: Polygon,
    pub ulcer: Vec<Polygon>,
    pub surrounding_skin: Vec<Polygon>,
}

impl RegionAnnotation {
    /// Checks bounds, simplicity and ROI containment. Error paths number regions in
    /// roi, ulcer, surrounding-skin order.
    pub fn validate(&self) -> Result<()> {
        let regions = std::iter::once(("roi", &self.roi))
            .chain(self.ulcer.iter().map(|p| ("ulcer", p)))
            .chain(self.surrounding_skin.iter().map(|p| ("surrounding_skin", p)));
        for (i, (class, poly)) in regions.enumerate() {
            let path = format!("annotation/region[{}]", i + 1);
            if poly.points.len() < 3 {
                return Err(Error::ingestion(
                    &path,
                    format!("{class} polygon needs at least 3 points, has {}", poly.points.len()),
                ));
            }
            for (j, p) in poly.points.iter().enumerate() {
                if !(p.x.is_finite() && p.y.is_finite())
                    || p.x < 0.0
                    || p.y < 0.0
                    || p.x > self.width as f64
                    || p.y > self.height as f64
                {
                    return Err(Error::ingestion(
                        format!("{path}/point[{}]", j + 1),
                        format!(
                            "coordinate ({}, {}) outside {}x{} image",
                            p.x, p.y, self.width, self.height
                        ),
                    ));
                }
            }
            if !poly.is_simple() {
                return Err(Error::ingestion(&path, format!("{class} polygon self-intersects")));
            }
            if class != "roi" {
                let outside = poly.points.iter().position(|&p| !self.roi.contains(p));
                let crosses = poly.edges().any(|(a, b)| {
                    self.roi.edges().any(|(c, d)| segments_cross(a, b, c, d))
                });
                if let Some(j) = outside {
                    return Err(Error::ingestion(
                        format!("{path}/point[{}]", j + 1),
                        format!("{class} polygon vertex lies outside the ROI"),
                    ));
                }
                if crosses {
                    return Err(Error::ingestion(&path, format!("{class} polygon crosses the ROI boundary")));
                }
            }
        }
        Ok(())
    }
}

/// Pluggable reader for annotation formats other than the built-in schema.
pub trait AnnotationImporter {
    fn import(&self, bytes: &[u8]) -> Result<RegionAnnotation>;
}

/// The built-in XML schema.
#[derive(Debug, Clone, Copy, Default)]
pub struct XmlSchema;

impl AnnotationImporter for XmlSchema {
    fn import(&self, bytes: &[u8]) -> Result<RegionAnnotation> {
        parse_annotation(bytes)
    }
}

fn attr<'a>(node: roxmltree::Node<'a, '_>, name: &str, path: &str) -> Result<&'a str> {
    node.attribute(name)
        .ok_or_else(|| Error::ingestion(path, format!("missing attribute '{name}'")))
}

fn num<T: std::str::FromStr>(node: roxmltree::Node<'_, '_>, name: &str, path: &str) -> Result<T> {
    let raw = attr(node, name, path)?;
    raw.trim()
        .parse()
        .map_err(|_| Error::ingestion(path, format!("attribute '{name}' is not a number: '{raw}'")))
}

/// Parses and validates one annotation document.
pub fn parse_annotation(xml: &[u8]) -> Result<RegionAnnotation> {
    let text = std::str::from_utf8(xml).map_err(|e| Error::ingestion("/", format!("not UTF-8: {e}")))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::ingestion("/", format!("malformed XML: {e}")))?;
    let root = doc.root_element();
    if root.tag_name().name() != "annotation" {
        return Err(Error::ingestion(
            root.tag_name().name(),
            "root element must be <annotation>",
        ));
    }
    let image_id = attr(root, "image", "annotation")?.to_string();
    let width: usize = num(root, "width", "annotation")?;
    let height: usize = num(root, "height", "annotation")?;

    let mut roi = None;
    let mut ulcer = Vec::new();
    let mut skin = Vec::new();
    for (i, region) in root.children().filter(|n| n.is_element()).enumerate() {
        let path = format!("annotation/{}[{}]", region.tag_name().name(), i + 1);
        if region.tag_name().name() != "region" {
            return Err(Error::ingestion(&path, "unexpected element"));
        }
        let mut points = Vec::new();
        for (j, pt) in region.children().filter(|n| n.is_element()).enumerate() {
            let ppath = format!("{path}/point[{}]", j + 1);
            if pt.tag_name().name() != "point" {
                return Err(Error::ingestion(&ppath, "expected <point>"));
            }
            points.push(Point {
                x: num(pt, "x", &ppath)?,
                y: num(pt, "y", &ppath)?,
            });
        }
        let poly = Polygon { points };
        match attr(region, "class", &path)? {
            "roi" => {
                if roi.replace(poly).is_some() {
                    return Err(Error::ingestion(&path, "more than one roi region"));
                }
            }
            "ulcer" => ulcer.push(poly),
            "surrounding_skin" => skin.push(poly),
            other => return Err(Error::ingestion(&path, format!("unknown region class '{other}'"))),
        }
    }
    let roi = roi.ok_or_else(|| Error::ingestion("annotation", "no roi region"))?;
    let ann = RegionAnnotation {
        image_id,
        width,
        height,
        roi,
        ulcer,
        surrounding_skin: skin,
    };
    ann.validate()?;
    Ok(ann)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Writes the annotation in the built-in schema (ROI first, then ulcer, then skin).
pub fn serialize_annotation(ann: &RegionAnnotation) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<annotation image="{}" width="{}" height="{}">"#,
        escape(&ann.image_id),
        ann.width,
        ann.height
    );
    let regions = std::iter::once(("roi", &ann.roi))
        .chain(ann.ulcer.iter().map(|p| ("ulcer", p)))
        .chain(ann.surrounding_skin.iter().map(|p| ("surrounding_skin", p)));
    for (class, poly) in regions {
        let _ = writeln!(out, r#"  <region class="{class}">"#);
        for p in &poly.points {
            let _ = writeln!(out, r#"    <point x="{}" y="{}"/>"#, p.x, p.y);
        }
        out.push_str("  </region>\n");
    }
    out.push_str("</annotation>\n");
    out
}
