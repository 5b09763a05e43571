// Entry point: wires the store to the DOM. Event handlers delegate on
// data-* attributes so the markup can be re-rendered wholesale.

import { ApiClient } from './api.js'
import { renderInstance, renderToolbar } from './render.js'
import { ConsoleStore } from './state.js'

const api = new ApiClient('')
const store = new ConsoleStore(api)

const picker = document.getElementById('instance-picker') as HTMLSelectElement
const toolbar = document.getElementById('toolbar') as HTMLElement
const view = document.getElementById('view') as HTMLElement

store.subscribe((state) => {
  toolbar.innerHTML = renderToolbar(state)
  view.innerHTML = renderInstance(state)
})

toolbar.addEventListener('input', (ev) => {
  const el = ev.target as HTMLInputElement
  if (el.matches('[data-alpha-slider],[data-alpha-entry]')) {
    const v = Number(el.value)
    if (Number.isFinite(v)) void store.setAlpha(v)
  }
})

toolbar.addEventListener('click', (ev) => {
  const el = ev.target as HTMLElement
  if (el.matches('[data-undo]')) void store.undo()
})

view.addEventListener('click', (ev) => {
  const el = ev.target as HTMLElement
  const attr = el.getAttribute('data-intervene')
  if (attr) {
    const select = view.querySelector<HTMLSelectElement>(`[data-attr-select="${attr}"]`)
    if (select) void store.applyIntervention(attr, select.value)
  }
})

async function boot(): Promise<void> {
  await store.loadModel()
  const page = await api.instances('test', 0, 50)
  picker.innerHTML = page.instances
    .map((inst) => `<option value="${inst.id}">#${inst.id} (${inst.corruption})</option>`)
    .join('')
  picker.addEventListener('change', () => {
    const inst = page.instances.find((i) => i.id === Number(picker.value))
    if (inst) void store.selectInstance(inst.id, inst.labels, inst.corruption)
  })
  if (page.instances.length > 0) {
    const first = page.instances[0]
    picker.value = String(first.id)
    await store.selectInstance(first.id, first.labels, first.corruption)
  }
}

boot().catch((e) => {
  view.innerHTML = `<p class="status error">${e instanceof Error ? e.message : String(e)}</p>`
})
