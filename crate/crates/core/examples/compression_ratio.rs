//! Media-to-transcript compression ratio, as reported by `semlink ratio`.

use semlink::metrics::compression_ratio;
use semlink::pipeline::{FileTranscriptGse, GseAdapter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("semlink-ratio-example");
    std::fs::create_dir_all(&dir)?;
    let media = dir.join("clip.mp4");
    // a sparse file stands in for ~4 min of 1080p video
    std::fs::File::create(&media)?.set_len(276_480_000)?;
    let transcript = FileTranscriptGse::sidecar_path(&media);
    std::fs::write(&transcript, "A young child slides down the slide in the park. ".repeat(40))?;

    let text = FileTranscriptGse.extract(media.to_str().unwrap())?;
    let m = std::fs::metadata(&media)?.len();
    let t = text.len() as u64;
    println!("media {m} bytes, transcript {t} bytes");
    println!("ratio {:.6}", compression_ratio(m, t)?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
