import { GatewayClient } from "./api";
import { createApp } from "./app";
import "./style.css";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
createApp(root, new GatewayClient());
