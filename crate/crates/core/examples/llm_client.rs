//! Prompt templates and the HTTP knowledge-base client. Without the API
//! key in the environment only the rendered prompts are shown.

use std::collections::BTreeMap;

use semlink::fuzzyctl::{PromptDirective, SnrClass};
use semlink::kb::{render_prompt, template_ids, KbBackend, LlmClientConfig, LlmKb};

fn main() -> semlink::error::Result<()> {
    println!("templates: {:?}", template_ids());

    let mut slots = BTreeMap::new();
    slots.insert("text", "A young child, beaming with a smile, eagerly slides down the slide.".to_string());
    slots.insert("range", "[0.70, 0.80]".to_string());
    match render_prompt("encode.v1", &slots) {
        Ok(p) => println!("\n{p}\n"),
        Err(e) => println!("render failed: {e}"),
    }

    let config = LlmClientConfig::default();
    if std::env::var_os(&config.api_key_env).is_none() {
        println!("{} not set, skipping the live call", config.api_key_env);
        return Ok(());
    }
    let kb = LlmKb::new(config)?;
    let r = kb.kb_encode(&slots["text"], &PromptDirective::for_class(SnrClass::Low));
    println!("reply: {} (pass-through: {})", r.text, r.pass_through);
    Ok(())
}
