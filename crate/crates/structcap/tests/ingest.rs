//! Frame providers against the committed sample clip.
//!
//! `tests/fixtures/sample_video` holds 30 PNG frames at 12 fps. Its golden
//! metadata was produced by the image-directory provider; regenerate both
//! with `STRUCTCAP_BLESS=1 cargo test -p structcap --test ingest`.

use std::path::{Path, PathBuf};

use structcap::ingest::{extract_metadata, sample_frames, write_image_dir, CommandProvider, DecodeError, FrameProvider, ImageDirProvider};
use structcap::pngio::frame_file_name;
use structcap_core::image::RgbImage;
use structcap_core::sampling::TemporalMetadata;

const FRAMES: u32 = 30;
const FPS: f64 = 12.0;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn frame(t: u32) -> RgbImage {
    RgbImage::from_fn(24, 16, |x, y| [(x * 10 + t * 8) as u8, (y * 15) as u8, (t * 8) as u8])
}

fn bless_if_asked() {
    if std::env::var_os("STRUCTCAP_BLESS").is_none() {
        return;
    }
    let dir = fixtures().join("sample_video");
    let _ = std::fs::remove_dir_all(&dir);
    let frames: Vec<_> = (0..FRAMES).map(frame).collect();
    write_image_dir(&dir, &frames, FPS).unwrap();
    let meta = extract_metadata(&ImageDirProvider::default(), &dir, 8).unwrap();
    let mut json = serde_json::to_string_pretty(&meta).unwrap();
    json.push('\n');
    std::fs::write(fixtures().join("sample_video.metadata.json"), json).unwrap();
}

#[test]
fn golden_metadata() {
    bless_if_asked();
    let dir = fixtures().join("sample_video");
    let meta = extract_metadata(&ImageDirProvider::default(), &dir, 8).unwrap();
    let golden: TemporalMetadata =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("sample_video.metadata.json")).unwrap()).unwrap();
    assert_eq!(meta, golden);

    // By hand: round_half_up(k * 29 / 7) for k = 0..8, over 12 fps.
    let want = [0u32, 4, 8, 12, 17, 21, 25, 29];
    let stamps: Vec<f64> = want.iter().map(|&i| f64::from(i) / FPS).collect();
    assert_eq!(meta.timestamps, stamps);
    assert_eq!(meta.frame_count, 30);
    assert_eq!(meta.duration, 2.5);
    assert!(meta.is_consistent());
}

#[test]
fn sampled_pixels_come_from_the_right_files() {
    let dir = fixtures().join("sample_video");
    let (seq, meta) = sample_frames(&ImageDirProvider::default(), &dir, 8).unwrap();
    assert_eq!(seq.clip(), "frames");
    for (f, t) in seq.frames().iter().zip(&meta.timestamps) {
        assert_eq!(f.image, frame(f.index));
        assert_eq!(f.timestamp, *t);
    }
}

#[test]
fn more_samples_than_frames_collapses() {
    let tmp = tempfile::tempdir().unwrap();
    write_image_dir(tmp.path(), &[frame(0), frame(1), frame(2)], 10.0).unwrap();
    let (seq, meta) = sample_frames(&ImageDirProvider::default(), tmp.path(), 5).unwrap();
    let idx: Vec<u32> = seq.frames().iter().map(|f| f.index).collect();
    assert_eq!(idx, [0, 1, 2]);
    assert_eq!(meta.timestamps, [0.0, 0.1, 0.2]);
}

#[test]
fn provider_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let p = ImageDirProvider::default();
    assert!(matches!(p.probe(&tmp.path().join("absent")), Err(DecodeError::Unreadable { .. })));
    assert!(matches!(p.probe(tmp.path()), Err(DecodeError::NoFrames(_))));

    // A gap in numbering.
    write_image_dir(tmp.path(), &[frame(0), frame(1)], 10.0).unwrap();
    std::fs::rename(tmp.path().join(frame_file_name(1)), tmp.path().join(frame_file_name(5))).unwrap();
    assert!(p.probe(tmp.path()).is_err());

    // No fps anywhere.
    let bare = tempfile::tempdir().unwrap();
    structcap::pngio::write_png(&bare.path().join(frame_file_name(0)), &frame(0)).unwrap();
    assert!(p.probe(bare.path()).is_err());
    assert_eq!(ImageDirProvider::new(Some(25.0)).probe(bare.path()).unwrap().fps, 25.0);

    // A corrupt frame file.
    std::fs::write(bare.path().join(frame_file_name(0)), b"not a png").unwrap();
    assert!(matches!(
        ImageDirProvider::new(Some(25.0)).read_frames(bare.path(), &[0]),
        Err(DecodeError::BadFrame { index: 0, .. })
    ));
}

#[test]
fn command_provider_runs_external_decoder() {
    let sample = fixtures().join("sample_video");
    let provider = CommandProvider {
        probe: vec![
            "sh".into(),
            "-c".into(),
            "printf '{\"frame_count\": 30, \"fps\": 12.0, \"duration\": 2.5}'".into(),
        ],
        decode: vec![
            "sh".into(),
            "-c".into(),
            "for i in $(echo {indices} | tr , ' '); do cp {input}/$(printf %06d $i).png {output}/; done".into(),
        ],
        scratch: None,
    };
    let via_cmd = sample_frames(&provider, &sample, 8).unwrap();
    let via_dir = sample_frames(&ImageDirProvider::default(), &sample, 8).unwrap();
    assert_eq!(via_cmd, via_dir);

    let failing = CommandProvider {
        probe: vec!["sh".into(), "-c".into(), "exit 3".into()],
        ..provider
    };
    assert!(matches!(failing.probe(&sample), Err(DecodeError::Command { .. })));
}
