//! C ABI over the artstyle library.
//!
//! Every fallible function returns an [`ArtstyleStatus`]. On failure a
//! description is kept per thread and can be read with
//! [`artstyle_last_error`]. Networks are opaque handles created by
//! `artstyle_network_init` / `artstyle_network_load` and released with
//! `artstyle_network_free`. Strings and byte buffers handed out by the
//! library must be released with `artstyle_string_free` /
//! `artstyle_bytes_free`.
//!
//! Images are `height * width * 3` doubles, row-major with interleaved
//! channels, values in [0, 1].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use artstyle::embed::{self, ArtistProfile};
use artstyle::graph::{build_lineage, build_similarity_network, to_json};
use artstyle::nnet::{
    decode_checkpoint, encode_checkpoint, infer_config, softmax_row, Network, NetworkConfig, NnetError,
    Tensor, CHANNELS, FEATURE_WIDTH, NUM_CLASSES,
};
use artstyle::tsne::{run_tsne, TsneConfig};
use artstyle::StyleClass;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtstyleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed checkpoint or other encoded input.
    Format = 3,
    /// NaN/Inf produced or encountered.
    Numeric = 4,
    /// Output buffer length does not match what the call produces.
    BufferSize = 5,
    /// A bug inside the library; the handle involved should be freed.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtstyleGraphKind {
    /// Undirected maximum-cosine-similarity network.
    Similarity = 0,
    /// Directed, earlier to later artist.
    Lineage = 1,
}

/// Opaque classifier handle.
pub struct ArtstyleNetwork {
    inner: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ArtstyleStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(ArtstyleStatus::InvalidArgument, msg.into())
    }
}

impl From<NnetError> for Failure {
    fn from(e: NnetError) -> Self {
        let status = match e {
            NnetError::NonFinite(_) | NnetError::Diverged { .. } => ArtstyleStatus::Numeric,
            NnetError::Checkpoint(_) => ArtstyleStatus::Format,
            _ => ArtstyleStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ArtstyleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArtstyleStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ArtstyleStatus::Internal
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err(Failure(ArtstyleStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, expected: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure(ArtstyleStatus::NullPointer, format!("{what} is null")));
    }
    if len != expected {
        return Err(Failure(
            ArtstyleStatus::BufferSize,
            format!("{what} has length {len}, expected {expected}"),
        ));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(net: *const ArtstyleNetwork) -> Result<&'a Network, Failure> {
    net.as_ref()
        .map(|n| &n.inner)
        .ok_or_else(|| Failure(ArtstyleStatus::NullPointer, "network handle is null".into()))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(ArtstyleStatus::NullPointer, format!("{what} is null")))
}

fn image_tensor(net: &Network, data: &[f64]) -> Result<Tensor, Failure> {
    let c = net.config();
    let expected = c.input_height * c.input_width * CHANNELS;
    if data.len() != expected {
        return Err(Failure(
            ArtstyleStatus::BufferSize,
            format!("image has {} values, expected {expected}", data.len()),
        ));
    }
    Ok(Tensor::from_vec(
        vec![c.input_height, c.input_width, CHANNELS],
        data.to_vec(),
    ))
}

fn metric_status(e: embed::EmbedError) -> Failure {
    match e {
        embed::EmbedError::NonFinite(_) => Failure(ArtstyleStatus::Numeric, e.to_string()),
        _ => Failure::invalid(e.to_string()),
    }
}

/// Description of the last failure on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn artstyle_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Freshly initialised network. `filters` may be NULL when `n_blocks` is 0.
///
/// # Safety
/// `filters` must point to `n_blocks` readable values and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_init(
    input_height: usize,
    input_width: usize,
    filters: *const usize,
    n_blocks: usize,
    seed: u64,
    out: *mut *mut ArtstyleNetwork,
) -> ArtstyleStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let filters = input(filters, n_blocks, "filters")?.to_vec();
        let config = NetworkConfig::new(input_height, input_width, filters);
        let inner = Network::init(config, seed)?;
        *out = Box::into_raw(Box::new(ArtstyleNetwork { inner }));
        Ok(())
    })
}

/// Network from checkpoint bytes. The input size is not stored in a
/// checkpoint; pass 0 for both to assume a square input.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_load(
    bytes: *const u8,
    len: usize,
    input_height: usize,
    input_width: usize,
    out: *mut *mut ArtstyleNetwork,
) -> ArtstyleStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bytes = input(bytes, len, "bytes")?;
        let params = decode_checkpoint(bytes)?;
        let hw = match (input_height, input_width) {
            (0, 0) => None,
            (0, _) | (_, 0) => return Err(Failure::invalid("input height and width must both be 0 or both > 0")),
            hw => Some(hw),
        };
        let config = infer_config(&params, hw)?;
        let inner = Network::new(config, params)?;
        *out = Box::into_raw(Box::new(ArtstyleNetwork { inner }));
        Ok(())
    })
}

/// Checkpoint bytes for `net`, released with `artstyle_bytes_free`.
///
/// # Safety
/// `net` must be a live handle; `out` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_save(
    net: *const ArtstyleNetwork,
    out: *mut *mut u8,
    out_len: *mut usize,
) -> ArtstyleStatus {
    guard(|| {
        let net = handle(net)?;
        let out = out_ptr(out, "out")?;
        let out_len = out_ptr(out_len, "out_len")?;
        let bytes = encode_checkpoint(&net.params).into_boxed_slice();
        *out_len = bytes.len();
        *out = Box::into_raw(bytes) as *mut u8;
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_free(net: *mut ArtstyleNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_input_size(
    net: *const ArtstyleNetwork,
    height: *mut usize,
    width: *mut usize,
) -> ArtstyleStatus {
    guard(|| {
        let net = handle(net)?;
        let c = net.config();
        *out_ptr(height, "height")? = c.input_height;
        *out_ptr(width, "width")? = c.input_width;
        Ok(())
    })
}

/// The 512 post-ReLU activations of the feature layer.
///
/// # Safety
/// `image` must hold `image_len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_features(
    net: *const ArtstyleNetwork,
    image: *const f64,
    image_len: usize,
    out: *mut f64,
    out_len: usize,
) -> ArtstyleStatus {
    guard(|| {
        let net = handle(net)?;
        let img = image_tensor(net, input(image, image_len, "image")?)?;
        let out = output(out, out_len, FEATURE_WIDTH, "out")?;
        out.copy_from_slice(&net.extract_features(&img)?);
        Ok(())
    })
}

/// Probabilities of the nine style classes, in label order.
///
/// # Safety
/// `image` must hold `image_len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_predict(
    net: *const ArtstyleNetwork,
    image: *const f64,
    image_len: usize,
    out: *mut f64,
    out_len: usize,
) -> ArtstyleStatus {
    guard(|| {
        let net = handle(net)?;
        let img = image_tensor(net, input(image, image_len, "image")?)?;
        let out = output(out, out_len, NUM_CLASSES, "out")?;
        let batch = Tensor::from_vec(
            [&[1], img.shape()].concat(),
            img.data().to_vec(),
        );
        let (logits, _) = net.forward(&batch)?;
        out.copy_from_slice(&softmax_row(logits.data()));
        Ok(())
    })
}

/// Grad-CAM map for `class_index` (0-based), upsampled to the input size:
/// `out_len` must be `height * width`. `layer` names a convolution block
/// such as "conv2"; NULL selects the last one.
///
/// # Safety
/// `image` must hold `image_len` doubles, `out` `out_len` doubles, and
/// `layer` must be NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn artstyle_network_gradcam(
    net: *const ArtstyleNetwork,
    image: *const f64,
    image_len: usize,
    class_index: usize,
    layer: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> ArtstyleStatus {
    guard(|| {
        let net = handle(net)?;
        let img = image_tensor(net, input(image, image_len, "image")?)?;
        let layer = if layer.is_null() {
            None
        } else {
            Some(
                CStr::from_ptr(layer)
                    .to_str()
                    .map_err(|_| Failure::invalid("layer is not UTF-8"))?,
            )
        };
        let c = net.config();
        let out = output(out, out_len, c.input_height * c.input_width, "out")?;
        let map = net.grad_cam(&img, class_index, layer, true)?;
        let values = map.upsampled.unwrap_or(map.values);
        out.copy_from_slice(&values);
        Ok(())
    })
}

unsafe fn pair_metric(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> Result<f64, embed::EmbedError>,
) -> ArtstyleStatus {
    guard(|| {
        let a = input(a, len, "a")?;
        let b = input(b, len, "b")?;
        let out = out_ptr(out, "out")?;
        *out = f(a, b).map_err(metric_status)?;
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_euclidean(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> ArtstyleStatus {
    pair_metric(a, b, len, out, embed::euclidean)
}

/// Fails with `InvalidArgument` when either vector has zero norm.
///
/// # Safety
/// `a` and `b` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_cosine_similarity(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> ArtstyleStatus {
    pair_metric(a, b, len, out, embed::cosine_similarity)
}

/// `1 - cosine_similarity`.
///
/// # Safety
/// `a` and `b` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_cosine_distance(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> ArtstyleStatus {
    pair_metric(a, b, len, out, embed::cosine_distance)
}

/// Exact T-SNE of `n` row-major points of dimension `dim` into `out_dims`
/// (2 or 3). Schedule parameters are the library defaults. `out_len` must
/// be `n * out_dims`. `final_kl` may be NULL.
///
/// # Safety
/// `data` must hold `n * dim` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn artstyle_tsne(
    data: *const f64,
    n: usize,
    dim: usize,
    out_dims: usize,
    perplexity: f64,
    iterations: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
    final_kl: *mut f64,
) -> ArtstyleStatus {
    guard(|| {
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Failure::invalid("n * dim overflows"))?;
        let data = input(data, len, "data")?;
        let expected = n
            .checked_mul(out_dims)
            .ok_or_else(|| Failure::invalid("n * out_dims overflows"))?;
        let out = output(out, out_len, expected, "out")?;
        if dim == 0 {
            return Err(Failure::invalid("dim must be > 0"));
        }
        let points: Vec<Vec<f64>> = data.chunks(dim).map(<[f64]>::to_vec).collect();
        let config = TsneConfig {
            out_dims,
            perplexity,
            iterations,
            seed,
            ..TsneConfig::default()
        };
        let emb = run_tsne(&points, &config).map_err(|e| {
            let status = if matches!(e, artstyle::tsne::TsneError::NonFiniteKl(_)) {
                ArtstyleStatus::Numeric
            } else {
                ArtstyleStatus::InvalidArgument
            };
            Failure(status, e.to_string())
        })?;
        out.copy_from_slice(&emb.y);
        if !final_kl.is_null() {
            *final_kl = emb.final_kl();
        }
        Ok(())
    })
}

/// Builds an artist graph and returns it as JSON, released with
/// `artstyle_string_free`.
///
/// `ids` holds `n` NUL-terminated artist ids, `vectors` `n * dim` doubles
/// (one mean embedding per artist), `years` `n` mean years (NaN when
/// unknown; a lineage requires every year) and `styles` `n` zero-based
/// class labels.
///
/// # Safety
/// Every pointer must reference the number of elements described above;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn artstyle_graph_json(
    kind: ArtstyleGraphKind,
    ids: *const *const c_char,
    vectors: *const f64,
    years: *const f64,
    styles: *const u32,
    n: usize,
    dim: usize,
    out: *mut *mut c_char,
) -> ArtstyleStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ids = input(ids, n, "ids")?;
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Failure::invalid("n * dim overflows"))?;
        let vectors = input(vectors, len, "vectors")?;
        let years = input(years, n, "years")?;
        let styles = input(styles, n, "styles")?;
        if dim == 0 {
            return Err(Failure::invalid("dim must be > 0"));
        }
        let mut profiles = Vec::with_capacity(n);
        for i in 0..n {
            if ids[i].is_null() {
                return Err(Failure(ArtstyleStatus::NullPointer, format!("ids[{i}] is null")));
            }
            let id = CStr::from_ptr(ids[i])
                .to_str()
                .map_err(|_| Failure::invalid(format!("ids[{i}] is not UTF-8")))?;
            let style = StyleClass::from_ordinal(styles[i] as usize)
                .ok_or_else(|| Failure::invalid(format!("styles[{i}] = {} outside 0..9", styles[i])))?;
            profiles.push(ArtistProfile {
                artist_id: id.to_string(),
                mean_vector: vectors[i * dim..(i + 1) * dim].to_vec(),
                mean_year: Some(years[i]).filter(|y| !y.is_nan()),
                n_paintings: 1,
                style,
            });
        }
        let built = match kind {
            ArtstyleGraphKind::Similarity => build_similarity_network(&profiles),
            ArtstyleGraphKind::Lineage => build_lineage(&profiles),
        }
        .map_err(|e| Failure::invalid(e.to_string()))?;
        let json = CString::new(to_json(&built.graph)).map_err(|_| Failure::invalid("id contains NUL"))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn artstyle_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `bytes`/`len` must be NULL/any or a buffer returned by this library and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn artstyle_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}
