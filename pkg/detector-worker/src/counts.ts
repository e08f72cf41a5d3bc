/** Canonical vehicle classes, in wire order. Counts dictionaries always
 * carry all five keys. */
export const VEHICLE_CLASSES = ["bicycle", "car", "motorcycle", "bus", "truck"] as const;

export type VehicleClass = (typeof VEHICLE_CLASSES)[number];

export type Counts = Record<VehicleClass, number>;

export function zeroCounts(): Counts {
  return { bicycle: 0, car: 0, motorcycle: 0, bus: 0, truck: 0 };
}
