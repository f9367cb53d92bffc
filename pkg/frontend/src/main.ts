// Browser entry point: read the page-provided config and mount the app.

import { mountApp } from './app.js'
import { loadConfig } from './config.js'

const root = document.getElementById('app')
if (!root) throw new Error('missing #app element')
mountApp(root, loadConfig())
