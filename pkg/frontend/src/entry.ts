import "./style.css";

import { PortalClient } from "./api.js";
import { boot } from "./main.js";

// ?badges=0 hides the provenance badge; everything else is defaults.
const params = new URLSearchParams(window.location.search);
void boot(document, new PortalClient(), {
  showProvenance: params.get("badges") !== "0",
});
