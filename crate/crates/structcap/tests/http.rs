mod common;

use structcap::contract::{run_contract_suite, square_frame};
use structcap::fixtures::{moving_square_adapter, moving_square_script, FRAMES};
use structcap::http::{HttpAdapter, HttpChatBackend};
use structcap::mock_server::{MockAdapterConfig, MockAdapterServer, MockModels};
use structcap::packs::Assets;
use structcap::run::{build_adapter, caption_video, provider, BackendFactory, ErrorKind};
use structcap::services::{EvalAdapter, StubAdapter};
use structcap_core::amc::{AdapterError, ModelAdapter};
use structcap_core::orchestrator::OP_INSTANCE;
use structcap_core::pipeline::PipelineStage;
use structcap_core::sampling::uniform_indices;

use common::*;

fn serve(cfg: MockAdapterConfig) -> MockAdapterServer {
    MockAdapterServer::start("127.0.0.1:0", cfg).unwrap()
}

#[test]
fn mock_service_passes_contract_suite() {
    let server = serve(MockAdapterConfig::default());
    let outcomes = run_contract_suite(&server.url(), None);
    assert!(outcomes.len() >= 15);
    for o in &outcomes {
        assert!(o.passed, "{}: {}", o.name, o.detail);
    }
}

#[test]
fn contract_suite_with_token() {
    let server = serve(MockAdapterConfig {
        token: Some("s3cret".into()),
        ..MockAdapterConfig::default()
    });
    assert!(run_contract_suite(&server.url(), Some("s3cret")).iter().all(|o| o.passed));
    let mut a = HttpAdapter::new(&server.url(), Some("wrong".into()));
    match a.detect(&square_frame(4)) {
        Err(AdapterError::Protocol(m)) | Err(AdapterError::Transport(m)) => assert!(m.contains("401"), "{m}"),
        other => panic!("expected an auth failure, got {other:?}"),
    }
}

#[test]
fn caption_over_http_matches_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let (video, mut cfg) = moving_square_setup(tmp.path());

    cfg.output_dir = tmp.path().join("local");
    let mut adapter = build_adapter(&cfg).unwrap();
    let backend = BackendFactory::new(&cfg).unwrap().build();
    caption_video(&video, "square", &cfg, &Assets::default(), provider(&cfg).as_ref(), &mut adapter, backend).unwrap();

    let indices = uniform_indices(FRAMES, SAMPLES).unwrap();
    let server = serve(
        MockAdapterConfig {
            models: MockModels::Scripted(moving_square_adapter(&indices)),
            ..MockAdapterConfig::default()
        }
        .with_chat_script(moving_square_script()),
    );
    cfg.output_dir = tmp.path().join("remote");
    cfg.adapter.endpoint = server.url();
    cfg.backend.endpoint = server.url();
    cfg.validate().unwrap();
    let mut adapter = build_adapter(&cfg).unwrap();
    let backend = BackendFactory::new(&cfg).unwrap().build();
    caption_video(&video, "square", &cfg, &Assets::default(), provider(&cfg).as_ref(), &mut adapter, backend).unwrap();

    assert_eq!(tree(&tmp.path().join("local/square")), tree(&tmp.path().join("remote/square")));

    // On the wire, instance conversations carried only composited pixels.
    let log = server.chat_log();
    assert_eq!(log.len(), 4);
    for req in &log {
        let instance = req.chat.operation.as_deref().is_some_and(|o| o.starts_with(OP_INSTANCE));
        assert!(!req.image_data.is_empty());
        assert!(req.image_data.iter().all(|f| (f.clip == "instance_0") == instance));
    }
}

#[test]
fn unavailable_detector_is_a_backend_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (video, mut cfg) = moving_square_setup(tmp.path());
    let server = serve(MockAdapterConfig {
        unavailable: vec!["/detect".into()],
        ..MockAdapterConfig::default()
    });
    cfg.adapter.endpoint = server.url();
    let mut adapter = build_adapter(&cfg).unwrap();
    let backend = BackendFactory::new(&cfg).unwrap().build();
    let err = caption_video(&video, "square", &cfg, &Assets::default(), provider(&cfg).as_ref(), &mut adapter, backend)
        .unwrap_err();
    assert_eq!(err.stage, PipelineStage::Amc);
    assert_eq!(err.kind, ErrorKind::Backend);
    assert!(err.message.contains("503"), "{}", err.message);
}

#[test]
fn eval_endpoints_match_local_stub() {
    let server = serve(MockAdapterConfig::default());
    let mut remote = HttpAdapter::new(&server.url(), None);
    let mut local = StubAdapter::default();
    let texts = vec!["a red square".to_string(), "a blue circle".to_string()];
    assert_eq!(remote.embed_text(&texts).unwrap(), local.embed_text(&texts).unwrap());
    let frames: Vec<_> = (0..3).map(|i| square_frame(4 + 2 * i)).collect();
    assert_eq!(remote.embed_image(&frames).unwrap(), local.embed_image(&frames).unwrap());
    let z = remote.vae_latent(&frames).unwrap();
    assert_eq!(z, local.vae_latent(&frames).unwrap());
    let info = remote.info().unwrap();
    assert_eq!(info.latent.shape(frames.len()), z.shape());
    assert_eq!(remote.detect(&square_frame(4)).unwrap(), local.detect(&square_frame(4)).unwrap());
}

#[test]
fn chat_refs_without_pixels_are_refused_client_side() {
    use structcap_core::chat::{BackendError, ChatBackend, ChatRequest, ChatTurn, ImageRef};
    let server = serve(MockAdapterConfig::default());
    let mut chat = HttpChatBackend::new(&server.url(), None);
    let req = ChatRequest {
        model: "m".into(),
        turns: vec![ChatTurn::user_with_images(
            "look",
            vec![ImageRef {
                clip: "frames".into(),
                frame_index: 0,
            }],
        )],
        temperature: 0.0,
        seed: Some(1),
        max_tokens: 16,
        operation: Some("global".into()),
    };
    assert!(matches!(chat.chat(&req), Err(BackendError::Protocol(_))));
    assert!(server.chat_log().is_empty());
}
