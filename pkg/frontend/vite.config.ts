import { defineConfig } from "vitest/config";

// In dev the page is served by vite and the portal runs separately
// (`intentportal serve` defaults to 8321); the proxy keeps the client
// on relative /v1 URLs in both worlds.
export default defineConfig({
  server: {
    proxy: {
      "/v1": "http://127.0.0.1:8321",
    },
  },
  test: {
    environment: "happy-dom",
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
