use crate::crypto::PublicKey;
use crate::simnet::Network;
use crate::trust::{verify_metadata, Agreement, EntityDescriptor, FederationMetadata};

/// What one entity knows about its federation: the operator's key, the
/// agreements it takes part in and the latest verified metadata.
#[derive(Clone, Debug, Default)]
pub struct FederationView {
    pub ttp_key: Option<PublicKey>,
    pub agreements: Vec<Agreement>,
    pub metadata: Option<FederationMetadata>,
}

impl FederationView {
    pub fn new(ttp_key: PublicKey, agreements: Vec<Agreement>) -> Self {
        Self {
            ttp_key: Some(ttp_key),
            agreements,
            metadata: None,
        }
    }

    pub fn member(&self, entity_id: &str) -> Option<&EntityDescriptor> {
        self.metadata.as_ref()?.member(entity_id)
    }

    /// Verifies a pushed aggregate and installs it unless it is older than
    /// the one already held.
    pub(crate) fn install(&mut self, owner: &str, blob: &str, net: &mut Network, correlation: &str) {
        let Some(key) = self.ttp_key.as_ref() else {
            net.record(owner, "metadata-rejected", correlation, "no trust anchor");
            return;
        };
        match verify_metadata(blob.as_bytes(), key, net.now()) {
            Ok(md) => {
                if self.metadata.as_ref().is_some_and(|cur| cur.serial >= md.serial) {
                    net.record(owner, "metadata-rejected", correlation, format!("stale serial {}", md.serial));
                } else {
                    net.record(owner, "metadata-installed", correlation, format!("serial {}", md.serial));
                    self.metadata = Some(md);
                }
            }
            Err(e) => net.record(owner, "metadata-rejected", correlation, e.to_string()),
        }
    }
}
