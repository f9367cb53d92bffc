// Process harness for end-to-end tests: boots the real tile endpoint and the
// real query service as child processes, builds a corpus, and hands the tests
// plain URLs. Everything runs on ephemeral ports and in temp directories.

import { spawn, type ChildProcessWithoutNullStreams } from 'node:child_process'
import { mkdtemp, rm, writeFile } from 'node:fs/promises'
import { createServer } from 'node:net'
import { tmpdir } from 'node:os'
import { join } from 'node:path'

const PYTHON = process.env.SNIP_E2E_PYTHON ?? 'python3'

export interface Stack {
  /** Base URL of the mock tile endpoint. */
  tileBase: string
  /** Tile URL template both the service and the map view resolve. */
  urlTemplate: string
  /** Base URL of the query service. */
  serviceUrl: string
  layer: string
  date: string
  stop(): Promise<void>
}

function childEnv(): NodeJS.ProcessEnv {
  return { ...process.env, PYTHONUNBUFFERED: '1' }
}

/** Run a command to completion; rejects with its combined output on failure. */
function run(cmd: string, args: string[]): Promise<string> {
  return new Promise((resolve, reject) => {
    const child = spawn(cmd, args, { env: childEnv() })
    let out = ''
    child.stdout.on('data', (d: Buffer) => (out += d))
    child.stderr.on('data', (d: Buffer) => (out += d))
    child.on('error', reject)
    child.on('close', (code) => {
      if (code === 0) resolve(out)
      else reject(new Error(`${cmd} ${args.join(' ')} exited ${code}:\n${out}`))
    })
  })
}

export function runCli(args: string[]): Promise<string> {
  return run(PYTHON, ['-m', 'tilesift', ...args])
}

function runScript(code: string, args: string[]): Promise<string> {
  return run(PYTHON, ['-c', code, ...args])
}

async function stopChild(child: ChildProcessWithoutNullStreams): Promise<void> {
  if (child.exitCode !== null || child.signalCode !== null) return
  await new Promise<void>((resolve) => {
    const killTimer = setTimeout(() => {
      child.kill('SIGKILL')
    }, 5000)
    child.once('exit', () => {
      clearTimeout(killTimer)
      resolve()
    })
    child.kill('SIGTERM')
  })
}

/** Ask the OS for a currently-free TCP port. */
function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer()
    srv.once('error', reject)
    srv.listen(0, '127.0.0.1', () => {
      const addr = srv.address()
      if (addr === null || typeof addr === 'string') {
        srv.close()
        reject(new Error('listener reported no port'))
        return
      }
      const { port } = addr
      srv.close(() => resolve(port))
    })
  })
}

interface MockServerHandle {
  child: ChildProcessWithoutNullStreams
  baseUrl: string
  urlTemplate: string
}

/** Start the tile endpoint on an ephemeral port and parse its announcement. */
function spawnMockServer(): Promise<MockServerHandle> {
  return new Promise((resolve, reject) => {
    const child = spawn(PYTHON, ['-m', 'tilesift.mockserver', '--port', '0'], {
      env: childEnv(),
    })
    let buf = ''
    let done = false
    const finish = (err: Error | null, handle?: MockServerHandle) => {
      if (done) return
      done = true
      clearTimeout(timer)
      if (err) {
        child.kill('SIGKILL')
        reject(err)
      } else {
        resolve(handle!)
      }
    }
    const timer = setTimeout(
      () => finish(new Error(`tile endpoint never announced its URL:\n${buf}`)),
      15_000,
    )
    child.stdout.on('data', (d: Buffer) => {
      buf += String(d)
      const base = buf.match(/serving tiles at (http:\/\/[\d.]+:\d+)/)
      const template = buf.match(/url template:\s+(\S+)/)
      if (base && template) finish(null, { child, baseUrl: base[1], urlTemplate: template[1] })
    })
    child.stderr.on('data', (d: Buffer) => (buf += String(d)))
    child.on('error', (err) => finish(err))
    child.on('exit', (code) => finish(new Error(`tile endpoint exited early (${code}):\n${buf}`)))
  })
}

async function waitForHealth(serviceUrl: string, diagnostics: () => string): Promise<void> {
  const deadline = Date.now() + 60_000
  for (;;) {
    try {
      const resp = await fetch(`${serviceUrl}/v1/health`)
      if (resp.ok) return
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) {
      throw new Error(`service at ${serviceUrl} never became healthy:\n${diagnostics()}`)
    }
    await new Promise((r) => setTimeout(r, 200))
  }
}

interface ServiceHandle {
  child: ChildProcessWithoutNullStreams
  serviceUrl: string
}

async function spawnService(configPath: string, port: number): Promise<ServiceHandle> {
  const child = spawn(PYTHON, ['-m', 'tilesift', 'serve', '--config', configPath], {
    env: childEnv(),
  })
  let log = ''
  child.stdout.on('data', (d: Buffer) => (log += d))
  child.stderr.on('data', (d: Buffer) => (log += d))
  const serviceUrl = `http://127.0.0.1:${port}`
  try {
    await waitForHealth(serviceUrl, () => log)
  } catch (err) {
    await stopChild(child)
    throw err
  }
  return { child, serviceUrl }
}

interface CorpusBuilder {
  (workDir: string, mock: MockServerHandle): Promise<{ storeDir: string; indexPath: string }>
}

async function startStack(layer: string, date: string, buildCorpus: CorpusBuilder): Promise<Stack> {
  const workDir = await mkdtemp(join(tmpdir(), 'snip-e2e-'))
  const mock = await spawnMockServer()
  try {
    const { storeDir, indexPath } = await buildCorpus(workDir, mock)
    const port = await freePort()
    const configPath = join(workDir, 'service.json')
    await writeFile(
      configPath,
      JSON.stringify({
        index_path: indexPath,
        store_path: storeDir,
        url_template: mock.urlTemplate,
        host: '127.0.0.1',
        port,
      }),
    )
    const service = await spawnService(configPath, port)
    return {
      tileBase: mock.baseUrl,
      urlTemplate: mock.urlTemplate,
      serviceUrl: service.serviceUrl,
      layer,
      date,
      async stop() {
        await Promise.all([stopChild(service.child), stopChild(mock.child)])
        await rm(workDir, { recursive: true, force: true })
      },
    }
  } catch (err) {
    await stopChild(mock.child)
    await rm(workDir, { recursive: true, force: true })
    throw err
  }
}

/**
 * Full product pipeline over real imagery: crawl one pyramid level from the
 * tile endpoint, embed it, build the index, serve it.
 */
export async function startImageryStack(level = 3, layer = 'demo', date = '2020-01-01'): Promise<Stack> {
  return startStack(layer, date, async (workDir, mock) => {
    const storeDir = join(workDir, 'store')
    const indexPath = join(workDir, 'index.tsf')
    await runCli([
      'ingest',
      '--layer', layer,
      '--dates', date,
      '--level', String(level),
      '--template', mock.urlTemplate,
      '--store', storeDir,
    ])
    await runCli([
      'build',
      '--store', storeDir,
      '--index', indexPath,
      '--trees', '8',
      '--metric', 'angular',
      '--seed', '0',
    ])
    return { storeDir, indexPath }
  })
}

const PLANT_SCRIPT = `
import sys
import numpy as np
from tilesift.store import EmbeddingStore

store_dir, template, n_cluster, n_total = sys.argv[1], sys.argv[2], int(sys.argv[3]), int(sys.argv[4])
rng = np.random.default_rng(4242)

def unit(v):
    return (v / np.linalg.norm(v)).astype(np.float32)

center = unit(rng.normal(size=128))
store = EmbeddingStore.create(store_dir, dimension=128, url_template=template)
for i in range(n_total):
    if i < n_cluster:
        vec = unit(center + 0.08 * rng.normal(size=128))
    else:
        vec = unit(rng.normal(size=128))
    store.insert("synth", "2020-01-01", 5, i // 32, i % 32, vec)
store.close()
`

export interface PlantedStack extends Stack {
  /** Item ids of the planted cluster (the first clusterSize ids). */
  clusterIds: number[]
}

/**
 * Corpus with a known tight cluster planted among random background points,
 * for checking that selection-driven refinement surfaces the cluster.
 */
export async function startPlantedStack(clusterSize = 12, total = 200): Promise<PlantedStack> {
  const stack = await startStack('synth', '2020-01-01', async (workDir, mock) => {
    const storeDir = join(workDir, 'store')
    const indexPath = join(workDir, 'index.tsf')
    await runScript(PLANT_SCRIPT, [storeDir, mock.urlTemplate, String(clusterSize), String(total)])
    await runCli([
      'build',
      '--store', storeDir,
      '--index', indexPath,
      '--trees', '12',
      '--metric', 'angular',
      '--seed', '0',
    ])
    return { storeDir, indexPath }
  })
  return { ...stack, clusterIds: Array.from({ length: clusterSize }, (_, i) => i) }
}
