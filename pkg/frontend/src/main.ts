import { ApiClient } from "./api.js";
import { ReviewConsole } from "./console.js";
import { renderApp } from "./view.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8765";
const token = params.get("token") ?? "";

const api = new ApiClient(baseUrl, token);
const console_ = new ReviewConsole(api);

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

renderApp(root, console_);
void console_.loadQueue();
