//! File formats: ASCII PLY models, the model registry, scenes, predictions,
//! keypoint sets, pose estimates and evaluation results.
//!
//! Floats are written as shortest round-trip decimals everywhere, so every
//! save/load pair reproduces values bit for bit. All writers go through a
//! temporary file that is renamed into place once complete.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::keypoints::{KeypointMethod, ObjectModel};
use crate::metrics::{AccuracyCurve, EvalRecord};
use crate::scene::{Prediction, Scene, SceneInstance};

/// Schema version of scene and prediction documents.
pub const FORMAT_VERSION: u32 = 1;

/// Name of the index file inside a registry directory.
pub const REGISTRY_FILE: &str = "registry.json";

pub const RESULTS_HEADER: &str = "frame_id,class_id,instance_id,add,adds,symmetric,invisible_fraction";
pub const POSES_HEADER: &str = "frame_id,cluster,class_id,status,min_support,pose";

const PREDICTION_MAGIC: &[u8; 8] = b"HPPRED\0\0";

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);

    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_error(e: serde_json::Error) -> Error {
    Error::parse(e.line(), e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(value).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    out
}

// ---------------------------------------------------------------------------
// PLY

/// Loads the vertex positions of an ASCII PLY file. Faces and extra vertex
/// properties are skipped.
pub fn load_ply(path: &Path, class_id: u32) -> Result<ObjectModel> {
    parse_ply(&read_bytes(path)?, class_id)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    header_line: usize,
}

pub fn parse_ply(bytes: &[u8], class_id: u32) -> Result<ObjectModel> {
    let mut lines = bytes.split(|&b| b == b'\n').enumerate().map(|(i, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        (i + 1, String::from_utf8_lossy(raw).into_owned())
    });

    match lines.next() {
        Some((_, magic)) if magic.trim() == "ply" => {}
        _ => return Err(Error::parse(1, "missing 'ply' magic line")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_seen = false;
    let mut last_line = 1;
    let mut header_done = false;
    for (line_no, line) in lines.by_ref() {
        last_line = line_no;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => match tokens.next() {
                Some("ascii") => format_seen = true,
                Some(kind @ ("binary_little_endian" | "binary_big_endian")) => {
                    return Err(Error::UnsupportedFormat(format!(
                        "{kind} PLY is not supported; convert the model to ASCII PLY"
                    )));
                }
                other => {
                    return Err(Error::parse(line_no, format!("unknown PLY format {other:?}")))
                }
            },
            Some("element") => {
                let (Some(name), Some(count), None) = (tokens.next(), tokens.next(), tokens.next())
                else {
                    return Err(Error::parse(line_no, "expected 'element <name> <count>'"));
                };
                let count = count
                    .parse::<usize>()
                    .map_err(|_| Error::parse(line_no, format!("bad element count {count:?}")))?;
                elements.push(PlyElement {
                    name: name.to_owned(),
                    count,
                    properties: Vec::new(),
                    header_line: line_no,
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_no, "property before any element"))?;
                let rest: Vec<&str> = tokens.collect();
                let name = match rest.as_slice() {
                    ["list", _, _, name] => name,
                    [_, name] => name,
                    _ => return Err(Error::parse(line_no, "malformed property line")),
                };
                element.properties.push((*name).to_owned());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(Error::parse(line_no, format!("unexpected header keyword {other:?}")))
            }
        }
    }
    if !header_done {
        return Err(Error::parse(last_line, "header ended without 'end_header'"));
    }
    if !format_seen {
        return Err(Error::parse(last_line, "header has no 'format' line"));
    }

    let mut vertices = None;
    for element in &elements {
        if element.name != "vertex" {
            for _ in 0..element.count {
                if lines.next().is_none() {
                    return Err(Error::parse(last_line, format!("truncated '{}' data", element.name)));
                }
            }
            continue;
        }
        let column = |axis: &str| {
            element
                .properties
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| Error::parse(element.header_line, format!("vertex has no '{axis}' property")))
        };
        let (cx, cy, cz) = (column("x")?, column("y")?, column("z")?);
        if element.count == 0 {
            return Err(Error::EmptyModel);
        }
        let mut points = Vec::with_capacity(element.count.min(1 << 20));
        for _ in 0..element.count {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(last_line + 1, "truncated vertex data"))?;
            last_line = line_no;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() < element.properties.len() {
                return Err(Error::parse(line_no, "vertex line has too few values"));
            }
            let value = |c: usize| {
                tokens[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("bad coordinate {:?}", tokens[c])))
            };
            points.push(Vec3::new(value(cx)?, value(cy)?, value(cz)?));
        }
        vertices = Some(points);
        break;
    }
    let points = vertices.ok_or_else(|| Error::parse(last_line, "no 'vertex' element"))?;
    ObjectModel::new(class_id, points)
}

/// Writes the model points as an ASCII PLY with `double` coordinates.
pub fn save_ply(points: &[Vec3], path: &Path) -> Result<()> {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    for p in points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Keypoint files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub class_id: u32,
    /// `"fps"` or `"bbox8"`.
    pub method: String,
    pub m: usize,
    pub keypoints: Vec<[f64; 3]>,
}

impl KeypointFile {
    pub fn new(class_id: u32, method: KeypointMethod, keypoints: &[Vec3]) -> Self {
        let method_name = match method {
            KeypointMethod::Fps { .. } => "fps",
            KeypointMethod::BBox8 => "bbox8",
        };
        KeypointFile {
            class_id,
            method: method_name.to_owned(),
            m: keypoints.len(),
            keypoints: keypoints.iter().map(|k| [k.x, k.y, k.z]).collect(),
        }
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.keypoints.iter().map(|k| Vec3::from(*k)).collect()
    }

    pub fn method(&self) -> Result<KeypointMethod> {
        match self.method.as_str() {
            "fps" if self.m > 0 => Ok(KeypointMethod::Fps { m: self.m }),
            "bbox8" => Ok(KeypointMethod::BBox8),
            other => Err(Error::invalid(format!("unknown keypoint method {other:?}"))),
        }
    }
}

pub fn save_keypoints(file: &KeypointFile, path: &Path) -> Result<()> {
    write_atomic(path, &to_json(file))
}

pub fn load_keypoints(path: &Path) -> Result<KeypointFile> {
    let file: KeypointFile = serde_json::from_str(&read_text(path)?).map_err(json_error)?;
    if file.keypoints.len() != file.m {
        return Err(Error::invalid(format!(
            "keypoint file declares m = {} but lists {}",
            file.m,
            file.keypoints.len()
        )));
    }
    if file.keypoints.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("keypoint file contains non-finite values"));
    }
    Ok(file)
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredModel {
    pub model: ObjectModel,
    pub symmetric: bool,
    /// How `model.keypoints` were selected.
    pub method: KeypointMethod,
}

/// Object models by class id, each with its keypoints selected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelRegistry {
    models: BTreeMap<u32, RegisteredModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryIndex {
    version: u32,
    models: Vec<RegistryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryEntry {
    class_id: u32,
    ply: String,
    #[serde(default)]
    symmetric: bool,
    /// Selection to run on load, e.g. `"fps8"` or `"bbox8"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints: Option<String>,
    /// Precomputed keypoint file, relative to the registry directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoint_file: Option<String>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a model whose keypoints were chosen by `method`. Class 0 is
    /// reserved for background and ids must be unique.
    pub fn insert(&mut self, model: ObjectModel, symmetric: bool, method: KeypointMethod) -> Result<()> {
        if model.class_id == crate::scene::BACKGROUND_CLASS {
            return Err(Error::invalid("class id 0 is reserved for background"));
        }
        if self.models.contains_key(&model.class_id) {
            return Err(Error::invalid(format!("duplicate class id {}", model.class_id)));
        }
        self.models.insert(
            model.class_id,
            RegisteredModel {
                model,
                symmetric,
                method,
            },
        );
        Ok(())
    }

    pub fn get(&self, class_id: u32) -> Result<&RegisteredModel> {
        self.models.get(&class_id).ok_or(Error::UnknownModel(class_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegisteredModel> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Number of classes including background, i.e. the largest id plus one.
    pub fn num_classes(&self) -> usize {
        self.models.keys().next_back().map_or(1, |&c| c as usize + 1)
    }

    /// Copy of the registry with every model's keypoints re-selected.
    pub fn with_keypoints(&self, method: KeypointMethod) -> Result<Self> {
        let models = self
            .models
            .iter()
            .map(|(&id, entry)| {
                Ok((
                    id,
                    RegisteredModel {
                        model: entry.model.clone().with_keypoints(method)?,
                        symmetric: entry.symmetric,
                        method,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        Ok(ModelRegistry { models })
    }

    /// Loads `registry.json` from `dir` together with the PLY files it lists.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let index_path = dir.join(REGISTRY_FILE);
        let index: RegistryIndex =
            serde_json::from_str(&read_text(&index_path)?).map_err(json_error)?;
        if index.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: index.version,
                expected: FORMAT_VERSION,
            });
        }
        let mut registry = ModelRegistry::new();
        for entry in index.models {
            let model = load_ply(&dir.join(&entry.ply), entry.class_id)?;
            let (model, method) = match (&entry.keypoint_file, &entry.keypoints) {
                (Some(file), _) => {
                    let kp = load_keypoints(&dir.join(file))?;
                    let mut model = model;
                    model.keypoints = kp.points();
                    (model, kp.method()?)
                }
                (None, Some(method)) => {
                    let method: KeypointMethod = method.parse()?;
                    (model.with_keypoints(method)?, method)
                }
                (None, None) => {
                    let method = KeypointMethod::default();
                    (model.with_keypoints(method)?, method)
                }
            };
            registry.insert(model, entry.symmetric, method)?;
        }
        Ok(registry)
    }

    /// Writes every model as `class_<id>.ply` plus an index that records the
    /// keypoints in `class_<id>_kp.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for entry in self.models.values() {
            let id = entry.model.class_id;
            let ply = format!("class_{id}.ply");
            let kp = format!("class_{id}_kp.json");
            save_ply(entry.model.points(), &dir.join(&ply))?;
            save_keypoints(
                &KeypointFile::new(id, entry.method, &entry.model.keypoints),
                &dir.join(&kp),
            )?;
            entries.push(RegistryEntry {
                class_id: id,
                ply,
                symmetric: entry.symmetric,
                keypoints: None,
                keypoint_file: Some(kp),
            });
        }
        let index = RegistryIndex {
            version: FORMAT_VERSION,
            models: entries,
        };
        write_atomic(&dir.join(REGISTRY_FILE), &to_json(&index))
    }
}

// ---------------------------------------------------------------------------
// Scenes

#[derive(Debug, Deserialize)]
struct VersionProbe {
    version: u32,
}

fn check_version(text: &str) -> Result<()> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(json_error)?;
    if probe.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: probe.version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneDoc {
    version: u32,
    frame_id: u64,
    instances: Vec<InstanceDoc>,
    points: Vec<[f64; 3]>,
    gt_class: Vec<u32>,
    gt_instance: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    class_id: u32,
    /// 12 decimals: row-major rotation, then translation.
    pose: String,
    expected_points: usize,
}

pub fn scene_to_json(scene: &Scene) -> Vec<u8> {
    to_json(&SceneDoc {
        version: FORMAT_VERSION,
        frame_id: scene.frame_id,
        instances: scene
            .instances
            .iter()
            .map(|inst| InstanceDoc {
                class_id: inst.class_id,
                pose: inst.pose.to_text(),
                expected_points: inst.expected_points,
            })
            .collect(),
        points: scene.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        gt_class: scene.gt_class.clone(),
        gt_instance: scene.gt_instance.clone(),
    })
}

pub fn scene_from_json(text: &str) -> Result<Scene> {
    check_version(text)?;
    let doc: SceneDoc = serde_json::from_str(text).map_err(json_error)?;
    let instances = doc
        .instances
        .into_iter()
        .map(|inst| {
            Ok(SceneInstance {
                class_id: inst.class_id,
                pose: Pose::parse_text(&inst.pose)?,
                expected_points: inst.expected_points,
            })
        })
        .collect::<Result<_>>()?;
    let scene = Scene {
        frame_id: doc.frame_id,
        points: doc.points.into_iter().map(Vec3::from).collect(),
        gt_class: doc.gt_class,
        gt_instance: doc.gt_instance,
        instances,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    write_atomic(path, &scene_to_json(scene))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    scene_from_json(&read_text(path)?)
}

// ---------------------------------------------------------------------------
// Predictions

#[derive(Debug, Serialize, Deserialize)]
struct PredictionDoc {
    version: u32,
    num_points: usize,
    num_keypoints: usize,
    num_classes: usize,
    /// Point-major, `num_keypoints` triples per point.
    kp_offsets: Vec<[f64; 3]>,
    center_offsets: Vec<[f64; 3]>,
    /// Point-major, `num_classes` values per point.
    class_scores: Vec<f64>,
}

/// On-disk encoding of a prediction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionFormat {
    #[default]
    Json,
    /// Little-endian layout:
    ///
    /// | bytes | content |
    /// |---|---|
    /// | 8 | magic `HPPRED\0\0` |
    /// | 4 | version, u32 |
    /// | 8 | point count N, u64 |
    /// | 4 | keypoint count M, u32 |
    /// | 4 | class count C, u32 |
    /// | 24·N·M | keypoint offsets, f64 x/y/z, point-major |
    /// | 24·N | center offsets, f64 x/y/z |
    /// | 8·N·C | class scores, f64, point-major |
    Binary,
}

impl PredictionFormat {
    /// `.bin` selects the binary layout; everything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => PredictionFormat::Binary,
            _ => PredictionFormat::Json,
        }
    }
}

fn triples(v: &[Vec3]) -> Vec<[f64; 3]> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

pub fn prediction_to_bytes(pred: &Prediction, format: PredictionFormat) -> Vec<u8> {
    match format {
        PredictionFormat::Json => to_json(&PredictionDoc {
            version: FORMAT_VERSION,
            num_points: pred.len(),
            num_keypoints: pred.num_keypoints(),
            num_classes: pred.num_classes(),
            kp_offsets: triples(pred.all_kp_offsets()),
            center_offsets: triples(pred.all_center_offsets()),
            class_scores: pred.all_scores().to_vec(),
        }),
        PredictionFormat::Binary => {
            let mut out = Vec::with_capacity(
                28 + 8 * (3 * pred.all_kp_offsets().len() + 3 * pred.len() + pred.all_scores().len()),
            );
            out.extend_from_slice(PREDICTION_MAGIC);
            out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            out.extend_from_slice(&(pred.len() as u64).to_le_bytes());
            out.extend_from_slice(&(pred.num_keypoints() as u32).to_le_bytes());
            out.extend_from_slice(&(pred.num_classes() as u32).to_le_bytes());
            for v in pred.all_kp_offsets().iter().chain(pred.all_center_offsets()) {
                for c in v.iter() {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            for s in pred.all_scores() {
                out.extend_from_slice(&s.to_le_bytes());
            }
            out
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or_else(|| Error::parse(0, format!("binary prediction truncated at byte {}", self.pos)))?;
        self.pos += N;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    fn vec3s(&mut self, n: usize) -> Result<Vec<Vec3>> {
        (0..n)
            .map(|_| Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?)))
            .collect()
    }
}

/// Decodes either encoding; the binary one is recognized by its magic.
pub fn prediction_from_bytes(bytes: &[u8]) -> Result<Prediction> {
    if bytes.starts_with(PREDICTION_MAGIC) {
        let mut r = Reader { bytes, pos: PREDICTION_MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let n = usize::try_from(r.u64()?).map_err(|_| Error::invalid("point count too large"))?;
        let m = r.u32()? as usize;
        let c = r.u32()? as usize;
        let expected = n
            .checked_mul(3 * m + 3 + c)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::invalid("prediction dimensions overflow"))?;
        if bytes.len() - r.pos != expected {
            return Err(Error::parse(
                0,
                format!("binary prediction body is {} bytes, expected {expected}", bytes.len() - r.pos),
            ));
        }
        let kp = r.vec3s(n * m)?;
        let center = r.vec3s(n)?;
        let scores = (0..n * c).map(|_| r.f64()).collect::<Result<_>>()?;
        return Prediction::new(m, c, kp, center, scores);
    }

    let text = std::str::from_utf8(bytes).map_err(|_| Error::parse(0, "prediction file is neither binary nor UTF-8 JSON"))?;
    check_version(text)?;
    let doc: PredictionDoc = serde_json::from_str(text).map_err(json_error)?;
    if doc.center_offsets.len() != doc.num_points {
        return Err(Error::invalid("prediction point count disagrees with its arrays"));
    }
    Prediction::new(
        doc.num_keypoints,
        doc.num_classes,
        doc.kp_offsets.into_iter().map(Vec3::from).collect(),
        doc.center_offsets.into_iter().map(Vec3::from).collect(),
        doc.class_scores,
    )
}

pub fn save_prediction(pred: &Prediction, path: &Path, format: PredictionFormat) -> Result<()> {
    write_atomic(path, &prediction_to_bytes(pred, format))
}

pub fn load_prediction(path: &Path) -> Result<Prediction> {
    prediction_from_bytes(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Pose estimates

/// One row of a poses file: an estimated instance, or a failed one.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub frame_id: u64,
    pub cluster: usize,
    pub class_id: u32,
    /// `None` when estimation failed for this cluster.
    pub pose: Option<Pose>,
    /// Smallest per-keypoint vote support (0 for failures).
    pub min_support: usize,
}

pub fn poses_to_csv(records: &[PoseRecord]) -> String {
    let mut out = String::from(POSES_HEADER);
    out.push('\n');
    for r in records {
        let (status, pose) = match &r.pose {
            Some(p) => ("ok", p.to_text()),
            None => ("failed", String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.frame_id, r.cluster, r.class_id, status, r.min_support, pose
        ));
    }
    out
}

pub fn poses_from_csv(text: &str) -> Result<Vec<PoseRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == POSES_HEADER => {}
        _ => return Err(Error::parse(1, "unexpected poses header")),
    }
    lines
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split(',').collect();
            let [frame, cluster, class, status, support, pose] = fields.as_slice() else {
                return Err(Error::parse(line_no, "expected 6 fields"));
            };
            let int = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::parse(line_no, format!("bad integer {s:?}")))
            };
            let pose = match status.trim() {
                "ok" => Some(Pose::parse_text(pose).map_err(|e| Error::parse(line_no, e.to_string()))?),
                "failed" => None,
                other => return Err(Error::parse(line_no, format!("bad status {other:?}"))),
            };
            Ok(PoseRecord {
                frame_id: int(frame)?,
                cluster: int(cluster)? as usize,
                class_id: u32::try_from(int(class)?).map_err(|_| Error::parse(line_no, "class id out of range"))?,
                pose,
                min_support: int(support)? as usize,
            })
        })
        .collect()
}

pub fn save_poses(records: &[PoseRecord], path: &Path) -> Result<()> {
    write_atomic(path, poses_to_csv(records).as_bytes())
}

pub fn load_poses(path: &Path) -> Result<Vec<PoseRecord>> {
    poses_from_csv(&read_text(path)?)
}

// ---------------------------------------------------------------------------
// Results

/// Results CSV, rows sorted by `(frame_id, instance_id)`.
pub fn results_to_csv(records: &[EvalRecord]) -> String {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame_id, r.instance_id));
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.frame_id, r.class_id, r.instance_id, r.add, r.adds, r.symmetric, r.invisible_fraction
        ));
    }
    out
}

pub fn save_results(records: &[EvalRecord], path: &Path) -> Result<()> {
    write_atomic(path, results_to_csv(records).as_bytes())
}

/// `threshold,accuracy` rows followed by an `auc,<value>` summary row.
pub fn curve_to_csv(curve: &AccuracyCurve) -> String {
    let mut out = String::from("threshold,accuracy\n");
    for (t, acc) in &curve.samples {
        out.push_str(&format!("{t},{acc}\n"));
    }
    out.push_str(&format!("auc,{}\n", curve.auc));
    out
}

pub fn save_curve(curve: &AccuracyCurve, path: &Path) -> Result<()> {
    write_atomic(path, curve_to_csv(curve).as_bytes())
}

/// Path helper for sibling outputs, e.g. `results.csv` → `results.curve.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
