use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use gdnn_core::admissibility::{Calculus, CountOptions, Enumeration, Mode};
use gdnn_core::basis::build_basis;
use gdnn_core::reps::Irrep;
use gdnn_core::{Admission, Architecture, ArchitectureSpec, GroupRef, Model, SignedPerm, SubgroupPair};

use crate::{ApiError, ApiResult, AppState, Entry, Job, JobRecord, Session};

type AppRef = State<Arc<AppState>>;

/// Runs group-theoretic work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn pair_json(calc: &Calculus, class: usize, pair: &SubgroupPair) -> Value {
    let g = calc.group();
    json!({
        "id": class,
        "h": pair.h.to_vec(),
        "k": pair.k.to_vec(),
        "h_order": pair.h.len(),
        "k_order": pair.k.len(),
        "degree": g.order() / pair.h.len(),
        "type": pair.index(),
    })
}

fn session_json(id: &str, s: &Session) -> Value {
    let layers: Vec<Vec<Value>> = s
        .layers
        .iter()
        .map(|l| {
            l.iter()
                .map(|e| {
                    let mut v = pair_json(&s.calc, e.class, &e.pair);
                    v["multiplicity"] = json!(e.mult);
                    v
                })
                .collect()
        })
        .collect();
    json!({
        "id": id,
        "group": s.group,
        "channels": s.channels,
        "batchnorm": s.batchnorm,
        "depth": s.layers.len(),
        "complete": s.complete(),
        "layers": layers,
    })
}

pub async fn list_groups() -> ApiResult<Json<Value>> {
    blocking(|| {
        let mut out = Vec::new();
        for name in gdnn_core::named::NAMES {
            let g = gdnn_core::named::shared(name)?;
            out.push(json!({ "name": g.name(), "order": g.order(), "degree": g.degree() }));
        }
        Ok(Json(Value::Array(out)))
    })
    .await
}

pub async fn group_pairs(State(st): AppRef, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let calc = st.calc(&name)?;
    blocking(move || {
        let g = calc.group();
        let pairs: Vec<Value> = g
            .pair_classes()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut v = pair_json(&calc, i, &c.rep);
                v["class_size"] = json!(c.size);
                v["weight"] = json!((c.k_multiplicity() * c.k_multiplicity()) as u64);
                v
            })
            .collect();
        Ok(Json(json!({ "group": g.name(), "pairs": pairs })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSession {
    group: String,
    #[serde(default = "one")]
    channels: usize,
    #[serde(default)]
    batchnorm: bool,
}

fn one() -> usize {
    1
}

pub async fn create_session(
    State(st): AppRef,
    body: Result<Json<NewSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    if req.channels == 0 {
        return Err(ApiError::unprocessable("channels must be positive"));
    }
    let calc = st.calc(&req.group)?;
    let s = Session { group: calc.group().name().to_string(), calc, layers: Vec::new(), channels: req.channels, batchnorm: req.batchnorm };
    let id = st.fresh_id("s");
    let view = session_json(&id, &s);
    st.insert_session(id, s);
    Ok((StatusCode::CREATED, Json(view)))
}

pub async fn get_session(State(st): AppRef, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let view = session_json(&id, &s.lock());
    Ok(Json(view))
}

#[derive(Deserialize)]
pub struct NextQuery {
    strict_decrease: Option<bool>,
}

pub async fn admissible_next(
    State(st): AppRef,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let strict = q.strict_decrease.unwrap_or(true);
    blocking(move || {
        let s = s.lock();
        let cands = s.calc.admissible_next(&s.pairs(), strict)?;
        let list: Vec<Value> = cands
            .iter()
            .map(|c| {
                let pair = &s.calc.group().pair_classes()[c.class_index].rep;
                let mut v = pair_json(&s.calc, c.class_index, pair);
                v["phi"] = json!(c.phi);
                v["weight"] = json!(c.weight);
                v
            })
            .collect();
        Ok(Json(json!({ "strict_decrease": strict, "candidates": list })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewLayer {
    pairs: Vec<usize>,
    multiplicities: Option<Vec<usize>>,
}

pub async fn add_layer(
    State(st): AppRef,
    Path(id): Path<String>,
    body: Result<Json<NewLayer>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let s = st.session(&id)?;
    blocking(move || {
        let mut s = s.lock();
        let mults = req.multiplicities.unwrap_or_else(|| vec![1; req.pairs.len()]);
        if req.pairs.is_empty() || mults.len() != req.pairs.len() || mults.contains(&0) {
            return Err(ApiError::unprocessable("a layer needs one positive multiplicity per pair"));
        }
        let classes = s.calc.group().pair_classes();
        let mut layer = Vec::new();
        for (i, (&class, &mult)) in req.pairs.iter().zip(&mults).enumerate() {
            if class >= classes.len() {
                return Err(ApiError::unprocessable(format!("unknown pair id {class}")));
            }
            if req.pairs[..i].contains(&class) {
                return Err(ApiError::unprocessable(format!("pair id {class} repeated in one layer")));
            }
            layer.push(Entry { class, pair: classes[class].rep, mult });
        }
        if s.complete() {
            return Err(ApiError::conflict(json!({ "error": "the architecture already ends in the trivial layer" })));
        }
        let mut pairs = s.pairs();
        pairs.push(layer.iter().map(|e| e.pair).collect());
        let report = s.calc.is_admissible(&pairs)?;
        if !report.admissible {
            let failing = report.checks.iter().find(|c| !c.ok);
            return Err(ApiError::conflict(json!({
                "error": "layer is not admissible",
                "failing_layer": report.failing_layer.unwrap_or(pairs.len()),
                "failing_irrep": report.failing_irrep,
                "phi_subgroup": failing.map(|c| c.phi.clone()),
                "expected_K": failing.map(|c| c.expected_k.clone()),
                "nonzero_projection_ok": report.nonzero_projection_ok,
            })));
        }
        s.layers.push(layer);
        Ok(Json(session_json(&id, &s)))
    })
    .await
}

pub async fn remove_last_layer(State(st): AppRef, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let mut s = s.lock();
    if s.layers.pop().is_none() {
        return Err(ApiError::conflict(json!({ "error": "the session has no layers" })));
    }
    Ok(Json(session_json(&id, &s)))
}

fn session_architecture(s: &Session) -> ApiResult<Architecture> {
    if !s.complete() {
        return Err(ApiError::conflict(json!({ "error": "the architecture must end in the trivial layer" })));
    }
    let layers: Vec<Vec<(SubgroupPair, usize)>> = s.layers.iter().map(|l| l.iter().map(|e| (e.pair, e.mult)).collect()).collect();
    let spec = ArchitectureSpec::from_pairs(GroupRef::Name(s.group.clone()), &layers, s.channels, s.batchnorm);
    Ok(Architecture::resolve_in(&spec, s.calc.group().clone())?)
}

pub async fn export(State(st): AppRef, Path(id): Path<String>) -> ApiResult<Response> {
    let s = st.session(&id)?;
    let text = blocking(move || {
        let s = s.lock();
        let arch = session_architecture(&s)?;
        if !arch.check(&s.calc)?.admissible {
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "stored prefix lost admissibility"));
        }
        Ok(arch.to_spec().to_json_pretty())
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SmokeRequest {
    seed: Option<u64>,
    inputs: Option<usize>,
}

pub async fn smoke(State(st): AppRef, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<Value>> {
    let req: SmokeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SmokeRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(e.to_string()))?
    };
    let s = st.session(&id)?;
    blocking(move || {
        let s = s.lock();
        let arch = session_architecture(&s)?;
        let model = Model::compile_with(&arch, Admission::Strict, &s.calc)?;
        let seed = req.seed.unwrap_or(0);
        let n = req.inputs.unwrap_or(20).clamp(1, 1000);
        let w = model.init_weights(seed, "normal")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..model.input_width()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let dev = model.invariance_deviation(&w, &xs)?;
        Ok(Json(json!({
            "deviation": dev,
            "passed": dev <= 1e-9,
            "parameters": model.n_params,
            "depth": model.depth(),
            "inputs": n,
            "seed": seed,
        })))
    })
    .await
}

pub async fn pattern(State(st): AppRef, Path((name, pair)): Path<(String, usize)>) -> ApiResult<Json<Value>> {
    let calc = st.calc(&name)?;
    blocking(move || {
        let g = calc.group();
        let class = g.pair_classes().get(pair).ok_or_else(|| ApiError::not_found(format!("unknown pair id {pair}")))?;
        let rep = Irrep::new(g, class.rep)?;
        let gens = g.generators();
        let rho: Vec<SignedPerm> = gens.iter().map(|&x| rep.evaluate(x).clone()).collect();
        let pi: Vec<SignedPerm> = gens.iter().map(|&x| g.element(x).clone()).collect();
        let basis = build_basis(&rho, &pi, rep.degree(), g.degree())?;
        let triplets: Vec<[i64; 4]> =
            basis.entries().map(|(r, c, b, s)| [r as i64, c as i64, b as i64, i64::from(s)]).collect();
        let mut v = pair_json(&calc, pair, &class.rep);
        v["rows"] = json!(rep.degree());
        v["cols"] = json!(g.degree());
        v["bases"] = json!(basis.len());
        v["triplets"] = json!(triplets);
        Ok(Json(v))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRequest {
    group: String,
    mode: String,
    max_depth: usize,
    enumeration: Option<Enumeration>,
}

pub async fn start_count(
    State(st): AppRef,
    body: Result<Json<CountRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let mode: Mode = req.mode.parse().map_err(ApiError::unprocessable)?;
    if !(2..=64).contains(&req.max_depth) {
        return Err(ApiError::unprocessable("max_depth must be between 2 and 64"));
    }
    let calc = st.calc(&req.group)?;
    let id = st.fresh_id("c");
    st.jobs.lock().insert(
        id.clone(),
        JobRecord { group: calc.group().name().to_string(), mode: mode.to_string(), max_depth: req.max_depth, state: Job::Running },
    );
    let mut opts = CountOptions::new(mode, req.max_depth);
    if let Some(e) = req.enumeration {
        opts.enumeration = e;
    }
    let (state, job) = (st.clone(), id.clone());
    tokio::spawn(async move {
        let _permit = state.count_permits.clone().acquire_owned().await;
        let result = tokio::task::spawn_blocking(move || calc.count(opts)).await;
        let outcome = match result {
            Ok(Ok(table)) => Job::Done(table),
            Ok(Err(e)) => Job::Failed(e.to_string()),
            Err(e) => Job::Failed(e.to_string()),
        };
        if let Some(rec) = state.jobs.lock().get_mut(&job) {
            rec.state = outcome;
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": id, "status": "running" }))))
}

pub async fn count_status(State(st): AppRef, Path(job): Path<String>) -> ApiResult<Json<Value>> {
    let jobs = st.jobs.lock();
    let rec = jobs.get(&job).ok_or_else(|| ApiError::not_found(format!("unknown count job {job}")))?;
    let mut v = json!({ "job": job, "group": rec.group, "mode": rec.mode, "max_depth": rec.max_depth });
    match &rec.state {
        Job::Running => v["status"] = json!("running"),
        Job::Done(t) => {
            v["status"] = json!("done");
            v["rows"] = json!(t.rows);
            v["csv"] = json!(t.to_csv());
        }
        Job::Failed(e) => {
            v["status"] = json!("failed");
            v["error"] = json!(e);
        }
    }
    Ok(Json(v))
}
