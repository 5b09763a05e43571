// Pure HTML renderers. Displayed numbers are taken verbatim from the
// latest /predict response; the only arithmetic here is percentage
// formatting for bar widths and labels.

import type { ConsoleState } from './state.js'
import type { PredictResponse } from './types.js'

export const DISPLAY_DECIMALS = 3

export function formatProb(p: number): string {
  return p.toFixed(DISPLAY_DECIMALS)
}

export function barWidthPct(p: number): number {
  return Math.max(0, Math.min(100, p * 100))
}

function esc(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;').replace(/"/g, '&quot;')
}

export function renderBars(
  states: string[],
  probs: number[],
  highlight = -1,
  marker = -1,
): string {
  const rows = states.map((s, i) => {
    const cls = ['bar-row', i === highlight ? 'argmax' : '', i === marker ? 'truth' : '']
      .filter(Boolean)
      .join(' ')
    return `
      <div class="${cls}" data-state="${esc(s)}" data-prob="${formatProb(probs[i])}">
        <span class="bar-label">${esc(s)}${i === marker ? ' ★' : ''}</span>
        <span class="bar-track"><span class="bar-fill" style="width:${barWidthPct(probs[i])}%"></span></span>
        <span class="bar-value">${formatProb(probs[i])}</span>
      </div>`
  })
  return rows.join('')
}

function argmax(xs: number[]): number {
  let best = 0
  for (let i = 1; i < xs.length; i++) if (xs[i] > xs[best]) best = i
  return best
}

export function renderAttributePanel(
  name: string,
  states: string[],
  response: PredictResponse,
  truth: string | null,
  suggested: boolean,
): string {
  const intervened = response.interventions.find((iv) => iv.attribute === name)
  const head = response.heads[name]
  const fused = response.poe_marginals[name]
  const markerIdx = truth === null ? -1 : states.indexOf(truth)
  const badge = intervened
    ? `<span class="badge intervened">do := ${esc(intervened.value)}</span>`
    : suggested
      ? '<span class="badge suggested">suggested next</span>'
      : ''
  const options = states
    .map((s) => `<option value="${esc(s)}"${s === truth ? ' selected' : ''}>${esc(s)}</option>`)
    .join('')
  const controls = intervened
    ? ''
    : `<span class="controls">
         <select data-attr-select="${esc(name)}">${options}</select>
         <button data-intervene="${esc(name)}">intervene</button>
       </span>`
  return `
    <section class="attribute-panel${suggested ? ' suggested-panel' : ''}" data-panel="${esc(name)}">
      <header><h3>${esc(name)}</h3>${badge}${controls}</header>
      <div class="dist-pair">
        <div class="dist" data-dist="head:${esc(name)}">
          <h4>neural head</h4>
          ${renderBars(states, head, argmax(head), markerIdx)}
        </div>
        <div class="dist" data-dist="poe:${esc(name)}">
          <h4>fused marginal</h4>
          ${renderBars(states, fused, argmax(fused), markerIdx)}
        </div>
      </div>
    </section>`
}

export function renderClassPanel(classStates: string[], response: PredictResponse): string {
  const npc = response.npc
  const cnpc = response.cnpc
  return `
    <section class="class-panel" data-panel="class">
      <header><h3>class prediction</h3>
        <span class="z-alpha">z_alpha = ${formatProb(response.z_alpha)}</span>
      </header>
      <div class="dist-pair">
        <div class="dist" data-dist="npc">
          <h4>NPC &rarr; <strong data-pred="npc">${esc(npc.class_label)}</strong></h4>
          ${renderBars(classStates, npc.class_dist, argmax(npc.class_dist))}
        </div>
        <div class="dist" data-dist="cnpc">
          <h4>CNPC &rarr; <strong data-pred="cnpc">${esc(cnpc.class_label)}</strong></h4>
          ${renderBars(classStates, cnpc.class_dist, argmax(cnpc.class_dist))}
        </div>
      </div>
    </section>`
}

export function renderInstance(state: ConsoleState): string {
  const model = state.model
  if (!model) return '<p class="status">loading model…</p>'
  if (state.instanceId === null) return '<p class="status">pick an instance to begin</p>'
  const parts: string[] = []
  if (state.error) parts.push(`<p class="status error">${esc(state.error)}</p>`)
  const r = state.response
  if (!r) {
    parts.push('<p class="status">waiting for prediction…</p>')
    return parts.join('\n')
  }
  const attrs = model.variables.filter((v) => v.role === 'attribute')
  for (const v of attrs) {
    const truth = state.instanceLabels ? (state.instanceLabels[v.name] ?? null) : null
    parts.push(
      renderAttributePanel(v.name, v.states, r, truth, state.suggestion === v.name),
    )
  }
  const classVar = model.variables.find((v) => v.name === model.class_variable)
  parts.push(renderClassPanel(classVar ? classVar.states : [], r))
  return parts.join('\n')
}

export function renderToolbar(state: ConsoleState): string {
  const undoDisabled = state.interventions.length === 0 ? ' disabled' : ''
  const applied = state.interventions
    .map((iv) => `<span class="chip">${esc(iv.attribute)}=${esc(iv.value)}</span>`)
    .join('')
  return `
    <label>alpha
      <input type="range" min="0" max="1" step="0.1" value="${state.alpha}" data-alpha-slider>
      <input type="number" min="0" max="1" step="0.01" value="${state.alpha}" data-alpha-entry>
    </label>
    <button data-undo${undoDisabled}>undo</button>
    <span class="applied">${applied}</span>
    <span class="corruption-tag">${esc(state.corruption)}</span>
    ${state.pending ? '<span class="status">…</span>' : ''}`
}
