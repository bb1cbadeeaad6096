use std::collections::HashMap;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use pedloc_core::augment::{random_augment, AugmentConfig};
use pedloc_core::clusterloc::{self, ClusterConfig};
use pedloc_core::gridnet;
use pedloc_core::patchlib::Provenance;
use pedloc_core::synth::{generate_scene, GroundTruthGrid, SynthConfig};
use pedloc_core::{DepthMap, Detection, PatchCategory, PixelRect};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState, FrameInfo};

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn api() -> Router<AppState> {
    Router::new()
        .route("/frames", get(list_frames))
        .route("/frames/{file}", get(get_frame))
        .route("/patches", get(list_patches).post(create_patch))
        .route("/patches/{file}", get(get_patch).delete(delete_patch))
        .route("/augment/preview", post(augment_preview))
        .route("/synth/preview", post(synth_preview))
        .route("/localize", post(localize))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

/// Splits `name.ext`; the id must be non-empty.
fn split_file<'a>(file: &'a str, ext: &str) -> Option<&'a str> {
    file.strip_suffix(ext)?.strip_suffix('.').filter(|id| !id.is_empty())
}

fn read_library(state: &AppState) -> std::sync::RwLockReadGuard<'_, pedloc_core::PatchLibrary> {
    state.library.read().unwrap_or_else(|e| e.into_inner())
}

async fn list_frames(State(state): State<AppState>) -> Json<Vec<FrameInfo>> {
    Json(state.frames.list())
}

async fn get_frame(State(state): State<AppState>, Path(file): Path<String>) -> ApiResult<Response> {
    let (id, raw) = match (split_file(&file, "png"), split_file(&file, "dfm")) {
        (Some(id), _) => (id, false),
        (_, Some(id)) => (id, true),
        _ => return Err(ApiError::not_found(format!("no route for frame file {file}"))),
    };
    let frame = state.frames.get(id).ok_or_else(|| ApiError::not_found(format!("unknown frame {id}")))?;
    if raw {
        Ok(([(header::CONTENT_TYPE, "application/octet-stream")], frame.to_dfm_bytes()).into_response())
    } else {
        Ok(png(frame.render_png()?))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewPatchRequest {
    pub frame_id: String,
    pub rect: PixelRect,
    pub category: PatchCategory,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewPatchResponse {
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchInfo {
    pub id: String,
    pub category: PatchCategory,
    pub width: usize,
    pub height: usize,
    pub source_frame: Option<String>,
    pub source_rect: Option<PixelRect>,
    pub created_at: String,
}

async fn create_patch(
    State(state): State<AppState>,
    Json(req): Json<NewPatchRequest>,
) -> ApiResult<(StatusCode, Json<NewPatchResponse>)> {
    let frame = state
        .frames
        .get(&req.frame_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown frame {}", req.frame_id)))?;
    let crop = frame.crop(req.rect)?;
    let provenance = Provenance {
        source_frame: Some(req.frame_id.clone()),
        source_rect: Some(req.rect),
    };
    let lib = state.library.clone();
    let patch = tokio::task::spawn_blocking(move || {
        let mut lib = lib.write().unwrap_or_else(|e| e.into_inner());
        lib.add_patch(&crop, req.category, provenance)
    })
    .await??;
    Ok((StatusCode::CREATED, Json(NewPatchResponse { id: patch.id })))
}

async fn list_patches(
    State(state): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<Vec<PatchInfo>>> {
    let filter = match query.get("category").filter(|c| !c.is_empty()) {
        Some(c) => Some(c.parse::<PatchCategory>().map_err(|e| ApiError::bad_request(e.to_string()))?),
        None => None,
    };
    let lib = read_library(&state);
    let out = lib
        .patches()
        .iter()
        .filter(|p| filter.is_none_or(|c| p.category == c))
        .map(|p| PatchInfo {
            id: p.id.clone(),
            category: p.category,
            width: p.map.width(),
            height: p.map.height(),
            source_frame: p.provenance.source_frame.clone(),
            source_rect: p.provenance.source_rect,
            created_at: p.created_at.clone(),
        })
        .collect();
    Ok(Json(out))
}

async fn get_patch(State(state): State<AppState>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = split_file(&file, "png").ok_or_else(|| ApiError::not_found(format!("no route for patch file {file}")))?;
    let map = {
        let lib = read_library(&state);
        lib.get(id).map(|p| p.map.clone()).ok_or_else(|| ApiError::not_found(format!("unknown patch {id}")))?
    };
    Ok(png(map.render_png()?))
}

async fn delete_patch(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let lib = state.library.clone();
    tokio::task::spawn_blocking(move || {
        let mut lib = lib.write().unwrap_or_else(|e| e.into_inner());
        lib.delete_patch(&id)
    })
    .await??;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentPreviewRequest {
    pub patch_id: String,
    #[serde(default)]
    pub config: AugmentConfig,
    pub seed: u64,
}

async fn augment_preview(State(state): State<AppState>, Json(req): Json<AugmentPreviewRequest>) -> ApiResult<Response> {
    let patch = {
        let lib = read_library(&state);
        lib.get(&req.patch_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown patch {}", req.patch_id)))?
    };
    let bytes = tokio::task::spawn_blocking(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        random_augment(&patch, &req.config, &mut rng)?.map.render_png()
    })
    .await??;
    Ok(png(bytes))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthPreviewRequest {
    #[serde(default)]
    pub config: SynthConfig,
    pub seed: u64,
}

/// Truth box as fractions of the scene width and height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthBox {
    pub cell: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthPreviewResponse {
    /// Base64 16-bit grayscale PNG.
    pub png: String,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f32,
    pub truth: GroundTruthGrid,
    pub boxes: Vec<TruthBox>,
    pub pedestrian_count: usize,
    pub distractor_count: usize,
}

fn truth_boxes(truth: &GroundTruthGrid) -> Vec<TruthBox> {
    let g = &truth.grid;
    truth
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.p > 0.5)
        .map(|(i, c)| {
            let (px, py) = c.centre_px(g, i);
            TruthBox {
                cell: i,
                cx: px / g.width as f64,
                cy: py / g.height as f64,
                w: c.w as f64,
                h: c.h as f64,
            }
        })
        .collect()
}

fn synth_scene(state: &AppState, cfg: &SynthConfig, seed: u64) -> ApiResult<pedloc_core::synth::Scene> {
    let lib = read_library(state);
    Ok(generate_scene(cfg, &lib, seed)?)
}

async fn synth_preview(
    State(state): State<AppState>,
    Json(req): Json<SynthPreviewRequest>,
) -> ApiResult<Json<SynthPreviewResponse>> {
    let resp = tokio::task::spawn_blocking(move || -> ApiResult<SynthPreviewResponse> {
        let scene = synth_scene(&state, &req.config, req.seed)?;
        Ok(SynthPreviewResponse {
            png: STANDARD.encode(scene.image.render_png()?),
            width: scene.image.width(),
            height: scene.image.height(),
            pixel_pitch: scene.image.pixel_pitch(),
            boxes: truth_boxes(&scene.truth),
            truth: scene.truth,
            pedestrian_count: scene.pedestrian_count,
            distractor_count: scene.distractor_count,
        })
    })
    .await??;
    Ok(Json(resp))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizeMethod {
    Cnn,
    Cluster,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub config: SynthConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeParams {
    /// Decision threshold on the cell probability (CNN only).
    pub threshold: Option<f64>,
    /// Baseline settings; the depth threshold defaults to 0.3 m above the frame's floor.
    pub cluster: Option<ClusterConfig>,
}

/// Exactly one of `frame_id` and `scene` must be given.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizeRequest {
    pub frame_id: Option<String>,
    pub scene: Option<SceneSpec>,
    pub method: LocalizeMethod,
    #[serde(default)]
    pub params: LocalizeParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizeResponse {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f32,
    pub detections: Vec<Detection>,
}

async fn localize(State(state): State<AppState>, Json(req): Json<LocalizeRequest>) -> ApiResult<Json<LocalizeResponse>> {
    if req.method == LocalizeMethod::Cnn && state.model.is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "cnn localization requires a loaded checkpoint"));
    }
    let resp = tokio::task::spawn_blocking(move || -> ApiResult<LocalizeResponse> {
        let image: DepthMap = match (&req.frame_id, &req.scene) {
            (Some(id), None) => {
                let frame = state.frames.get(id).ok_or_else(|| ApiError::not_found(format!("unknown frame {id}")))?;
                (*frame).clone()
            }
            (None, Some(spec)) => synth_scene(&state, &spec.config, spec.seed)?.image,
            _ => return Err(ApiError::bad_request("give exactly one of frame_id and scene")),
        };
        let (image, detections) = match req.method {
            LocalizeMethod::Cnn => {
                let params = state.model.as_ref().expect("checked above");
                let image = gridnet::fit_input(params, &image)?;
                let threshold = req.params.threshold.unwrap_or(0.5);
                let dets = gridnet::localize(params, &image, threshold)?;
                (image, dets)
            }
            LocalizeMethod::Cluster => {
                let cfg = req
                    .params
                    .cluster
                    .clone()
                    .unwrap_or_else(|| ClusterConfig::for_floor(image.floor_depth() as f64));
                let dets = clusterloc::localize(&image, &cfg)?;
                (image, dets)
            }
        };
        Ok(LocalizeResponse {
            width: image.width(),
            height: image.height(),
            pixel_pitch: image.pixel_pitch(),
            detections,
        })
    })
    .await??;
    Ok(Json(resp))
}
