//! Named strategy registries. Each pluggable algorithm family (stance
//! classifier, embedding provider, entity tagger) is a trait object built by a
//! factory registered under a name and chosen at run time.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::content::{EmbeddingProvider, EntityTagger, HashedEmbedder, HeuristicTagger};
use crate::lexicon::DrugLexicon;
use crate::sidecar::{SidecarClient, SidecarEmbedder, SidecarStance, SidecarTagger};
use crate::stance::{Masked, RuleBaseline, StanceClassifier};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown {kind} '{name}' (known: {known})")]
    Unknown { kind: &'static str, name: String, known: String },
    #[error("{kind} '{name}' needs a running sidecar")]
    NeedsSidecar { kind: &'static str, name: String },
    #[error("building {kind} '{name}': {message}")]
    Build { kind: &'static str, name: String, message: String },
}

/// Inputs available to factories.
#[derive(Clone, Default)]
pub struct StrategyContext {
    pub sidecar: Option<Arc<SidecarClient>>,
    pub lexicon: Option<Arc<DrugLexicon>>,
    pub masking: bool,
    pub embed_dim: Option<usize>,
}

impl StrategyContext {
    fn sidecar(&self, kind: &'static str, name: &str) -> Result<Arc<SidecarClient>, RegistryError> {
        self.sidecar.clone().ok_or_else(|| RegistryError::NeedsSidecar { kind, name: name.into() })
    }
}

type Factory<T> = Box<dyn Fn(&StrategyContext) -> Result<Box<T>, RegistryError> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, factories: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&StrategyContext) -> Result<Box<T>, RegistryError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, ctx: &StrategyContext) -> Result<Box<T>, RegistryError> {
        let factory = self.factories.get(name).ok_or_else(|| RegistryError::Unknown {
            kind: self.kind,
            name: name.into(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        factory(ctx)
    }
}

pub fn stance_classifiers() -> Registry<dyn StanceClassifier> {
    let mut r: Registry<dyn StanceClassifier> = Registry::new("stance classifier");
    r.register("rule", |ctx| {
        let base = RuleBaseline::bundled();
        if !ctx.masking {
            return Ok(Box::new(base));
        }
        let lex = ctx.lexicon.clone().ok_or_else(|| RegistryError::Build {
            kind: "stance classifier",
            name: "rule".into(),
            message: "masking requires a drug lexicon".into(),
        })?;
        Ok(Box::new(Masked::new(base, lex)))
    });
    r.register("sidecar", |ctx| {
        let client = ctx.sidecar("stance classifier", "sidecar")?;
        Ok(Box::new(SidecarStance::new(client, ctx.masking)))
    });
    r
}

pub fn embedding_providers() -> Registry<dyn EmbeddingProvider> {
    let mut r: Registry<dyn EmbeddingProvider> = Registry::new("embedding provider");
    r.register("baseline", |ctx| {
        let e = match ctx.embed_dim {
            Some(d) => HashedEmbedder::new(d).map_err(|e| RegistryError::Build {
                kind: "embedding provider",
                name: "baseline".into(),
                message: e.to_string(),
            })?,
            None => HashedEmbedder::default(),
        };
        Ok(Box::new(e))
    });
    r.register("sidecar", |ctx| {
        Ok(Box::new(SidecarEmbedder::new(ctx.sidecar("embedding provider", "sidecar")?)))
    });
    r
}

pub fn entity_taggers() -> Registry<dyn EntityTagger> {
    let mut r: Registry<dyn EntityTagger> = Registry::new("entity tagger");
    r.register("heuristic", |_| Ok(Box::new(HeuristicTagger)));
    r.register("sidecar", |ctx| Ok(Box::new(SidecarTagger::new(ctx.sidecar("entity tagger", "sidecar")?))));
    r
}
